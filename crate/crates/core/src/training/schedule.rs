/// Log-linear interpolation from `lr_start` at step 0 to `lr_end` at `total_steps`.
pub fn lr_schedule(step: usize, total_steps: usize, lr_start: f64, lr_end: f64) -> f64 {
    if total_steps == 0 {
        return lr_start;
    }
    let frac = (step.min(total_steps) as f64) / total_steps as f64;
    (lr_start.ln() + frac * (lr_end.ln() - lr_start.ln())).exp()
}
