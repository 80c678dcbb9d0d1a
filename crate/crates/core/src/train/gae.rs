use super::TrainError;

/// Generalized advantage estimation over one environment's transition
/// sequence (in time order).
///
/// `next_values[t]` is the critic's value of the state reached by transition
/// `t`; it is ignored when `dones[t]` is set, and the recursion is cut there
/// too. Returns `(advantages, value_targets)` with
/// `value_targets[t] = values[t] + advantages[t]`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), TrainError> {
    let n = rewards.len();
    if values.len() != n || next_values.len() != n || dones.len() != n {
        return Err(TrainError::LengthMismatch(format!(
            "rewards {n}, values {}, next_values {}, dones {}",
            values.len(),
            next_values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_values[t] * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let targets = values.iter().zip(&adv).map(|(v, a)| v + a).collect();
    Ok((adv, targets))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_terminal_step() {
        let (a, t) = compute_gae(&[1.0], &[0.0], &[0.0], &[true], 0.99, 0.95).unwrap();
        assert_eq!(a, vec![1.0]);
        assert_eq!(t, vec![1.0]);
    }

    #[test]
    fn lambda_zero_gives_td_errors() {
        let r = [1.0, -0.5, 2.0, 0.3];
        let v = [0.2, 0.4, -0.1, 0.7];
        let nv = [0.4, -0.1, 0.7, 0.5];
        let d = [false, false, true, false];
        let (a, _) = compute_gae(&r, &v, &nv, &d, 0.9, 0.0).unwrap();
        for i in 0..4 {
            let live = if d[i] { 0.0 } else { 1.0 };
            assert!((a[i] - (r[i] + 0.9 * nv[i] * live - v[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            compute_gae(&[1.0, 2.0], &[0.0], &[0.0, 0.0], &[false, false], 0.99, 0.95),
            Err(TrainError::LengthMismatch(_))
        ));
    }
}
