use super::StateVector;
use crate::error::{Error, Result};

/// Classical fixed-step RK4 for `u' = F(t, u)` on `[0, t_end]`.
pub fn rk4_integrate<F>(field: F, u0: &StateVector, t_end: f64, steps: usize) -> Result<StateVector>
where
    F: FnMut(f64, &StateVector) -> Result<StateVector>,
{
    rk4_integrate_from(field, u0, 0.0, t_end, steps)
}

/// Same as [`rk4_integrate`] on `[t_start, t_end]`.
pub fn rk4_integrate_from<F>(
    mut field: F,
    u0: &StateVector,
    t_start: f64,
    t_end: f64,
    steps: usize,
) -> Result<StateVector>
where
    F: FnMut(f64, &StateVector) -> Result<StateVector>,
{
    if steps == 0 {
        return Err(Error::InvalidInput("rk4 needs at least one step".into()));
    }
    let h = (t_end - t_start) / steps as f64;
    let mut u = u0.clone();
    let mut stage = u0.clone();
    for i in 0..steps {
        let t = t_start + i as f64 * h;
        let k1 = field(t, &u)?;
        stage.clone_from(&u);
        stage.axpy(0.5 * h, &k1);
        let k2 = field(t + 0.5 * h, &stage)?;
        stage.clone_from(&u);
        stage.axpy(0.5 * h, &k2);
        let k3 = field(t + 0.5 * h, &stage)?;
        stage.clone_from(&u);
        stage.axpy(h, &k3);
        let k4 = field(t + h, &stage)?;
        u.axpy(h / 6.0, &k1);
        u.axpy(h / 3.0, &k2);
        u.axpy(h / 3.0, &k3);
        u.axpy(h / 6.0, &k4);
        if !u.is_finite() {
            return Err(Error::NonFinite(format!("rk4 state at t = {}", t + h)));
        }
    }
    Ok(u)
}
