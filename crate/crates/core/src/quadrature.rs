//! Composite 7-point Gauss–Legendre rules.

const NODES: [f64; 7] = [
    -0.949_107_912_342_758_5,
    -0.741_531_185_599_394_4,
    -0.405_845_151_377_397_2,
    0.0,
    0.405_845_151_377_397_2,
    0.741_531_185_599_394_4,
    0.949_107_912_342_758_5,
];

const WEIGHTS: [f64; 7] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
    0.381_830_050_505_118_9,
    0.279_705_391_489_276_7,
    0.129_484_966_168_869_7,
];

/// Number of nodes per panel.
pub const NODES_PER_PANEL: usize = 7;

/// Coarsest geometric ratio between consecutive panels of a graded mesh.
const GRADING: f64 = 0.15;
/// Target width of the innermost panel relative to the half interval.
const INNERMOST: f64 = 1e-12;

fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    NODES
        .iter()
        .zip(WEIGHTS.iter())
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Uniform composite rule on `[a, b]`.
pub fn uniform<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    (0..panels)
        .map(|i| panel(&f, a + i as f64 * width, a + (i + 1) as f64 * width))
        .sum()
}

/// Composite rule on `[a, b]` with panels refined geometrically toward both
/// endpoints. Suited to integrands with algebraic endpoint singularities in
/// their derivatives, such as `W^{(p-1)/p}` near the wells.
pub fn graded<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let half = (panels / 2).max(1);
    let mid = 0.5 * (a + b);
    let len = 0.5 * (b - a);
    // breakpoints of [0, len], refined toward 0
    let ratio = INNERMOST.powf(1.0 / half as f64).max(GRADING);
    let mut cuts = Vec::with_capacity(half + 1);
    cuts.push(0.0);
    for j in 1..=half {
        cuts.push(len * ratio.powi((half - j) as i32));
    }
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += panel(&f, a + w[0], a + w[1]);
        total += panel(&f, b - w[1], b - w[0]);
    }
    debug_assert!((a + cuts[half] - mid).abs() <= 1e-12 * (1.0 + mid.abs()));
    total
}

/// Panel count for a requested total number of quadrature nodes.
pub fn panels_for(points: usize) -> usize {
    points.div_ceil(NODES_PER_PANEL).max(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        // degree 13 is the exactness limit of the 7-point rule
        let v = uniform(|x| x.powi(13) + x.powi(12), 0.0, 1.0, 1);
        assert!((v - (1.0 / 14.0 + 1.0 / 13.0)).abs() < 1e-15);
    }

    #[test]
    fn graded_handles_endpoint_singularity() {
        // \int_0^1 (t(1-t))^{1/3} dt = B(4/3, 4/3)
        let exact = 0.529_991_625_085_634_8_f64;
        let v = graded(|t: f64| (t * (1.0 - t)).cbrt(), 0.0, 1.0, 60);
        assert!((v - exact).abs() < 1e-9, "{v}");
    }
}
