//! Adam optimizer and the linear learning-rate schedule.

use crate::elem::Elem;
use crate::error::{PecError, Result};
use crate::nn::layers::DENORMAL_FLUSH;
use crate::nn::Network;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// First/second moments per parameter tensor plus the shared step counter.
/// Moments are zero-initialized.
#[derive(Debug, Clone)]
pub struct AdamState<E: Elem> {
    m: Vec<Vec<E>>,
    v: Vec<Vec<E>>,
    step: u64,
}

impl<E: Elem> AdamState<E> {
    pub fn new(param_lens: &[usize]) -> Self {
        AdamState {
            m: param_lens.iter().map(|&l| vec![E::zero(); l]).collect(),
            v: param_lens.iter().map(|&l| vec![E::zero(); l]).collect(),
            step: 0,
        }
    }

    pub fn for_network(net: &Network<E>) -> Self {
        let lens: Vec<usize> = net.param_slices().iter().map(|s| s.len()).collect();
        Self::new(&lens)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update with bias correction. `params` and `grads` must align with
/// the state's tensor list. `lr = 0` leaves parameters untouched.
pub fn adam_step<E: Elem>(
    state: &mut AdamState<E>,
    params: &mut [&mut [E]],
    grads: &[&[E]],
    lr: f64,
) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(PecError::ShapeMismatch(format!(
            "adam state holds {} tensors, got {} params / {} grads",
            state.m.len(),
            params.len(),
            grads.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.len() != m.len() || g.len() != m.len() {
            return Err(PecError::ShapeMismatch(format!(
                "adam tensor length mismatch: state {}, param {}, grad {}",
                m.len(),
                p.len(),
                g.len()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    let beta1 = E::from_f64(BETA1);
    let beta2 = E::from_f64(BETA2);
    let one_m_beta1 = E::from_f64(1.0 - BETA1);
    let one_m_beta2 = E::from_f64(1.0 - BETA2);
    let inv_bc1 = E::from_f64(1.0 / bc1);
    let inv_bc2_sqrt = E::from_f64(1.0 / bc2.sqrt());
    let eps = E::from_f64(EPS);
    let lr_e = E::from_f64(lr);
    let flush = E::from_f64(DENORMAL_FLUSH);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for ((pv, &gv), (mv, vv)) in p.iter_mut().zip(g.iter()).zip(m.iter_mut().zip(v.iter_mut()))
        {
            let mut mn = beta1 * *mv + one_m_beta1 * gv;
            let mut vn = beta2 * *vv + one_m_beta2 * gv * gv;
            // flush sub-1e-30 moments to zero; f32 denormals stall the loop
            if mn.abs() < flush {
                mn = E::zero();
            }
            if vn < flush {
                vn = E::zero();
            }
            *mv = mn;
            *vv = vn;
            let mhat = mn * inv_bc1;
            let vhat_sqrt = (vn).sqrt() * inv_bc2_sqrt;
            *pv = *pv - lr_e * mhat / (vhat_sqrt + eps);
        }
    }
    Ok(())
}

/// Linear decay from `initial` to zero over `total_steps`; constant when
/// `decay` is off.
pub fn lr_at(initial: f64, step: usize, total_steps: usize, decay: bool) -> Result<f64> {
    if !decay {
        return Ok(initial);
    }
    if total_steps == 0 {
        return Err(PecError::InvalidConfig(
            "linear decay needs a nonzero step budget".into(),
        ));
    }
    Ok(initial * (1.0 - step as f64 / total_steps as f64))
}
