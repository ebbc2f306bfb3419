//! Central finite-difference validation of tape gradients.

use crate::{DiffError, NodeId, ParameterStore, Tape, TapeBindings};

/// Compare analytic gradients of a scalar-valued function against central
/// finite differences over every parameter element.
///
/// Returns the maximum over elements of
/// |g_analytic − g_fd| / max(|g_analytic|, |g_fd|, 1e-8). Generic over the
/// caller's error type so model-building closures keep their own errors.
pub fn grad_check<F, E>(store: &ParameterStore, f: F, epsilon: f64) -> Result<f64, E>
where
    F: Fn(&mut Tape, &TapeBindings) -> Result<NodeId, E>,
    E: From<DiffError>,
{
    // Analytic pass.
    let mut tape = Tape::new();
    let bindings = store.bind(&mut tape);
    let y = f(&mut tape, &bindings)?;
    {
        let v = tape.value(y);
        if v.dim() != (1, 1) {
            return Err(E::from(DiffError::NonScalarOutput {
                rows: v.nrows(),
                cols: v.ncols(),
            }));
        }
    }
    let ids = bindings.ids();
    let grads = tape.grad(y, &ids)?;
    let analytic: Vec<(String, crate::Tensor)> = bindings
        .names()
        .iter()
        .zip(&grads)
        .map(|(n, &g)| (n.clone(), tape.value(g).clone()))
        .collect();

    let eval = |store: &ParameterStore| -> Result<f64, E> {
        let mut tape = Tape::new();
        let bindings = store.bind(&mut tape);
        let y = f(&mut tape, &bindings)?;
        Ok(tape.scalar(y)?)
    };

    let mut work = store.clone();
    let mut max_rel = 0.0f64;
    for (name, ga) in &analytic {
        let dim = work.get(name)?.dim();
        for i in 0..dim.0 {
            for j in 0..dim.1 {
                let orig = work.get(name)?[(i, j)];
                work.get_mut(name)?[(i, j)] = orig + epsilon;
                let plus = eval(&work)?;
                work.get_mut(name)?[(i, j)] = orig - epsilon;
                let minus = eval(&work)?;
                work.get_mut(name)?[(i, j)] = orig;
                let fd = (plus - minus) / (2.0 * epsilon);
                let an = ga[(i, j)];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-8);
                if rel > max_rel {
                    max_rel = rel;
                }
            }
        }
    }
    Ok(max_rel)
}
