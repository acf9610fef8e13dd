use crate::config::LossWeights;
use crate::renderer::RenderWeights;

/// Loss of one ray: `λ_c‖C_c − Ĉ‖² + λ_f‖C_f − Ĉ‖² + λ_w(Σ w_c + Σ w_f)`, where the
/// sums run over the sample weights only.
pub fn cerf_loss(
    pred_coarse: [f64; 3],
    pred_fine: [f64; 3],
    gt: [f64; 3],
    w_coarse: &RenderWeights<f64>,
    w_fine: &RenderWeights<f64>,
    lw: &LossWeights,
) -> f64 {
    let sq = |p: [f64; 3]| (0..3).map(|k| (p[k] - gt[k]).powi(2)).sum::<f64>();
    let l1 = w_coarse.samples().iter().sum::<f64>() + w_fine.samples().iter().sum::<f64>();
    lw.lambda_coarse * sq(pred_coarse) + lw.lambda_fine * sq(pred_fine) + lw.lambda_w * l1
}

/// Partial derivatives of [`cerf_loss`] with respect to its inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct RayLossGrad {
    pub d_coarse: [f64; 3],
    pub d_fine: [f64; 3],
    /// Same value for every sample weight of either pass; zero for the epipolar slot.
    pub d_sample_weight: f64,
}

pub fn cerf_loss_grad(pred_coarse: [f64; 3], pred_fine: [f64; 3], gt: [f64; 3], lw: &LossWeights) -> RayLossGrad {
    RayLossGrad {
        d_coarse: [0, 1, 2].map(|k| 2.0 * lw.lambda_coarse * (pred_coarse[k] - gt[k])),
        d_fine: [0, 1, 2].map(|k| 2.0 * lw.lambda_fine * (pred_fine[k] - gt[k])),
        d_sample_weight: lw.lambda_w,
    }
}
