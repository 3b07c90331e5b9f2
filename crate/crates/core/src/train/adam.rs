use crate::error::{Error, Result, TensorError};
use crate::float::Float;
use crate::model::ParameterStore;

/// Adam moments for every parameter of a store.
#[derive(Debug, Clone)]
pub struct AdamState<T: Float = f32> {
    pub m: ParameterStore<T>,
    pub v: ParameterStore<T>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Float> AdamState<T> {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    /// Zero moments shaped like `params`.
    pub fn new(params: &ParameterStore<T>) -> Self {
        let zeros = params.map(|_, t| crate::tensor::Tensor::zeros(t.dims()));
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: Self::BETA1,
            beta2: Self::BETA2,
            eps: Self::EPS,
        }
    }
}

/// One bias-corrected Adam update in place.
///
/// Nothing is modified when any gradient is non-finite or misaligned.
pub fn adam_step<T: Float>(
    params: &mut ParameterStore<T>,
    grads: &ParameterStore<T>,
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    for (name, p) in params.iter() {
        let g = grads
            .get(name)
            .ok_or_else(|| TensorError::Contract(format!("no gradient for `{name}`")))?;
        if g.dims() != p.dims() {
            return Err(TensorError::mismatch("adam_step", p.dims(), g.dims()).into());
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient { name: name.to_string() });
        }
        if state.m.get(name).map(|m| m.dims()) != Some(p.dims()) || state.v.get(name).map(|v| v.dims()) != Some(p.dims()) {
            return Err(TensorError::Contract(format!("optimizer state does not cover `{name}`")).into());
        }
    }
    if grads.len() != params.len() {
        return Err(TensorError::Contract("gradients name unknown parameters".into()).into());
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::lit(state.beta1), T::lit(state.beta2));
    let c1 = T::lit(1.0 - state.beta1.powi(t));
    let c2 = T::lit(1.0 - state.beta2.powi(t));
    let (lr, eps) = (T::lit(lr), T::lit(state.eps));
    let one = T::one();
    for (name, p) in params.iter_mut() {
        let g = grads.get(name).expect("checked above").data();
        let m = state.m.get_mut(name).expect("checked above").data_mut();
        let v = state.v.get_mut(name).expect("checked above").data_mut();
        for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
