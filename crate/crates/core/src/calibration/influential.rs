//! Selection of influential points on a pressure cycle.
//!
//! The emulator is trained on a handful of informative time points rather
//! than the whole curve. The selection always keeps the cycle start, the
//! systolic pressure peak, the valve-closure time (end of inflow) and
//! end-diastole; the remaining budget is spent greedily maximizing the
//! minimum time separation.

use crate::error::{Error, Result};

/// Indices into a cycle grid together with the selected `(t, I, P)` triples.
#[derive(Debug, Clone)]
pub struct InfluentialPoints {
    pub indices: Vec<usize>,
    pub times: Vec<f64>,
    pub flows: Vec<f64>,
    pub pressures: Vec<f64>,
}

/// Pick `k` influential points from one cycle sampled at `times` with the
/// observed `flows` and `pressures`.
pub fn select_influential_points(
    times: &[f64],
    flows: &[f64],
    pressures: &[f64],
    k: usize,
) -> Result<InfluentialPoints> {
    let n = times.len();
    if n == 0 || flows.len() != n || pressures.len() != n {
        return Err(Error::InvalidInput(
            "influential selection needs equal-length, non-empty arrays".into(),
        ));
    }
    if k < 5 {
        return Err(Error::InvalidInput(format!(
            "need at least 5 influential points, asked for {k}"
        )));
    }
    if k > n {
        return Err(Error::InvalidInput(format!(
            "asked for {k} influential points from a grid of {n}"
        )));
    }

    let mut selected: Vec<usize> = Vec::new();
    let push = |i: usize, sel: &mut Vec<usize>| {
        if !sel.contains(&i) {
            sel.push(i);
        }
    };

    // anchors: cycle start, systolic pressure peak, valve closure, end-diastole
    push(0, &mut selected);
    let peak_pressure = argmax(pressures);
    push(peak_pressure, &mut selected);
    let peak_flow = argmax(flows);
    if flows[peak_flow] > 0.0 {
        // first (near-)zero flow after the flow peak marks valve closure
        let tiny = 1e-9 * flows[peak_flow];
        if let Some(closure) = (peak_flow..n).find(|&i| flows[i] <= tiny) {
            push(closure, &mut selected);
        }
    }
    push(n - 1, &mut selected);

    // fill the rest by farthest-point sampling in time
    while selected.len() < k {
        let mut best = None;
        let mut best_dist = -1.0;
        for i in 0..n {
            if selected.contains(&i) {
                continue;
            }
            let d = selected
                .iter()
                .map(|&j| (times[i] - times[j]).abs())
                .fold(f64::INFINITY, f64::min);
            if d > best_dist {
                best_dist = d;
                best = Some(i);
            }
        }
        push(best.expect("k <= n leaves a free index"), &mut selected);
    }

    selected.sort_unstable();
    selected.dedup();
    Ok(InfluentialPoints {
        times: selected.iter().map(|&i| times[i]).collect(),
        flows: selected.iter().map(|&i| flows[i]).collect(),
        pressures: selected.iter().map(|&i| pressures[i]).collect(),
        indices: selected,
    })
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..xs.len() {
        if xs[i] > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inflow::InflowWaveform;
    use crate::windkessel::{steady_wk2, uniform_grid, Wk2Params};

    fn default_cycle() -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let inflow = InflowWaveform::default_half_sine();
        let grid = uniform_grid(17, 0.05);
        let series = steady_wk2(
            &inflow,
            &Wk2Params::new(1.1, 0.8).unwrap(),
            &grid,
            1e-3,
        )
        .unwrap();
        let flows: Vec<f64> = grid.iter().map(|&t| inflow.flow_at(t)).collect();
        (grid, flows, series.values().to_vec())
    }

    #[test]
    fn k_equal_to_grid_selects_everything() {
        let (t, f, p) = default_cycle();
        let sel = select_influential_points(&t, &f, &p, t.len()).unwrap();
        assert_eq!(sel.indices, (0..t.len()).collect::<Vec<_>>());
    }

    #[test]
    fn default_inflow_selection_hits_the_landmarks() {
        let (t, f, p) = default_cycle();
        let sel = select_influential_points(&t, &f, &p, 8).unwrap();
        assert_eq!(sel.indices.len(), 8);
        // cycle start and end-diastole
        assert!(sel.times.contains(&0.0));
        assert!((sel.times.last().unwrap() - 0.80).abs() < 1e-12);
        // a point in the peak-flow / systolic-peak region around t = 0.15-0.25
        assert!(
            sel.times.iter().any(|&x| (0.10..=0.30).contains(&x)),
            "no systolic point in {:?}",
            sel.times
        );
        // valve closure at the end of inflow (t = 0.30)
        assert!(
            sel.times.iter().any(|&x| (x - 0.30).abs() < 1e-9),
            "no closure point in {:?}",
            sel.times
        );
    }

    #[test]
    fn monotone_decay_keeps_endpoints() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.05).collect();
        let f = vec![0.0; 20];
        let p: Vec<f64> = t.iter().map(|x| 100.0 * (-x).exp()).collect();
        let sel = select_influential_points(&t, &f, &p, 5).unwrap();
        assert!(sel.indices.contains(&0));
        assert!(sel.indices.contains(&19));
    }

    #[test]
    fn rejects_small_and_oversized_requests() {
        let (t, f, p) = default_cycle();
        assert!(select_influential_points(&t, &f, &p, 4).is_err());
        assert!(select_influential_points(&t, &f, &p, t.len() + 1).is_err());
    }
}
