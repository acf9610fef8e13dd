//! Loss, optimizer, the training loop and image metrics.

mod adam;
mod evaluate;
mod loss;
mod metrics;
mod schedule;
mod train;

pub use adam::Adam;
pub use evaluate::{evaluate, render_view, EvalRow, EvalTable, RenderedView};
pub use loss::{cerf_loss, cerf_loss_grad, RayLossGrad};
pub use metrics::{psnr, ssim, PSNR_CAP};
pub use schedule::lr_schedule;
pub use train::{frame_rays, resolve_bounds, train, train_with, LogRecord, TrainOptions, TrainOutcome};
