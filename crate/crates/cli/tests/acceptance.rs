//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::process::{Command, ExitCode};
use std::time::Instant;

use cayley_gibbs::inference::{bp_marginals, map_estimate, InferenceProblem};
use cayley_gibbs::measure::{
    boundary_law, check_compatibility, edge_conditional, finite_volume, markov_kernel, BoundaryLaw,
    VertexWeight,
};
use cayley_gibbs::model::{BilayerState, DerivedParams, Spin};
use cayley_gibbs::solver::{
    classify_tigm_count, solve_full_3d, solve_invariant_sets, solve_scalar,
    solve_symmetric_diagonal, FixedPoint3, MultistartConfig, SolutionSet,
};
use cayley_gibbs::tree::{RootMode, Tree, TreeShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use Spin::{Minus as M, Plus as P};

const MODES: [RootMode; 2] = [RootMode::Full, RootMode::Reduced];
const SIGMA_PAIRS: [(Spin, Spin); 4] = [(P, P), (M, P), (P, M), (M, M)];

struct Outcome {
    pass: bool,
    summary: String,
}

fn outcome(pass: bool, summary: String) -> Outcome {
    Outcome { pass, summary }
}

fn unit(k: usize, theta: f64) -> DerivedParams {
    DerivedParams::new(k, theta, 1.0, 1.0, 1.0).unwrap()
}

fn multistart(params: &DerivedParams) -> SolutionSet {
    solve_full_3d(params, &MultistartConfig::default())
}

/// Nontrivial roots of `x = ((1 + θx)/(θ + x))²`, from the quadratic left
/// after dividing out `x = 1`.
fn k2_roots(theta: f64) -> (f64, f64) {
    let b = theta * theta - 2.0 * theta - 1.0;
    let disc = (b * b - 4.0).sqrt();
    ((b - disc) / 2.0, (b + disc) / 2.0)
}

fn big_theta(theta: f64) -> f64 {
    2.0 * theta / (theta * theta + 1.0)
}

/// Positive root of `u² + (1 − a)Θu − a = 0`.
fn k1_root(theta: f64, a: f64) -> f64 {
    let p = (1.0 - a) * big_theta(theta);
    (-p + (p * p + 4.0 * a).sqrt()) / 2.0
}

fn max_abs(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let counts: Vec<usize> = [2.9, 3.0, 3.1, 4.0, 10.0]
        .iter()
        .map(|&g| solve_scalar(2, g).unwrap().len())
        .collect();
    let roots = solve_scalar(2, 4.0).unwrap();
    let (v1, v2) = k2_roots(4.0);
    let closed = (roots[0] - v1).abs().max((roots[2] - v2).abs());
    let product = max_abs((1..=50).map(|i| {
        let theta = 3.0 + 17.0 * i as f64 / 50.0;
        let r = solve_scalar(2, theta).unwrap();
        (r[0] * r[2] - 1.0).abs()
    }));
    let elapsed = start.elapsed().as_secs_f64();
    let pass = counts == [1, 1, 3, 3, 3] && closed < 1e-10 && product < 1e-10 && elapsed < 1.0;
    outcome(
        pass,
        format!(
            "scalar bifurcation: counts {counts:?} (want [1, 1, 3, 3, 3]), |roots - closed form| = {closed:.1e} (< 1e-10), max |v1 v2 - 1| = {product:.1e} (< 1e-10), {elapsed:.3} s (< 1 s)"
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut ok = true;
    let mut seen = Vec::new();
    for (theta, want) in [(0.2, 3), (0.5, 1), (2.0, 1), (4.0, 3)] {
        let region = classify_tigm_count(2, theta).unwrap();
        let full = multistart(&unit(2, theta)).count;
        let reduced = solve_invariant_sets(&unit(2, theta)).unwrap().count;
        ok &= region.count_lower_bound == want && full == want && reduced == want;
        ok &= region.theta_c_high == 3.0 && region.theta_c_low == 1.0 / 3.0;
        seen.push((region.count_lower_bound, full, reduced));
    }
    outcome(
        ok,
        format!("phase regions: (classify, solve_full_3d, solve_invariant_sets) = {seen:?}, want 3/1/1/3 and theta_c = (1/3, 3) exactly"),
    )
}

fn criterion_3() -> Outcome {
    let params = DerivedParams::new(1, 2.0, 0.3, 0.3, 1.0).unwrap();
    let set = multistart(&params);
    let u1 = k1_root(2.0, 0.3);
    let dist = set
        .points()
        .map(|p| max_abs([(p.u - u1).abs(), (p.v - u1).abs(), (p.w - 1.0).abs()]))
        .fold(f64::INFINITY, f64::min);
    let quad = set
        .points()
        .map(|p| (p.u * p.u + (1.0 - 0.3) * big_theta(2.0) * p.u - 0.3).abs())
        .fold(0.0, f64::max);
    let pass = set.count == 1 && dist < 1e-8 && quad < 1e-12 && (u1 - 0.335142).abs() < 1e-6;
    outcome(
        pass,
        format!(
            "k=1 uniqueness: {} solution(s), u1 = {u1:.9} (~0.335142), distance to (u1,u1,1) = {dist:.1e} (< 1e-8), quadratic residual = {quad:.1e} (< 1e-12)",
            set.count
        ),
    )
}

fn criterion_4() -> Outcome {
    let diag = solve_symmetric_diagonal(2, 1.3, 0.5).unwrap();
    let table_gap = (diag.u - 0.5376526550).abs();
    let unit_gap = max_abs((0..20).map(|i| {
        let theta = 0.1 * 100f64.powf(i as f64 / 19.0);
        (solve_symmetric_diagonal(2, theta, 1.0).unwrap().u - 1.0).abs()
    }));
    outcome(
        table_gap < 1e-8 && unit_gap < 1e-10,
        format!(
            "monotone diagonal: u(k=2, theta=1.3, a=0.5) = {:.10} vs table 0.5376526550 (|diff| = {table_gap:.3e}, need < 1e-8; residual of computed root {:.1e}), max |u - 1| at a=1 over 20 theta = {unit_gap:.1e}",
            diag.u, diag.residual
        ),
    )
}

fn criterion_5() -> Outcome {
    let sets = [
        multistart(&unit(2, 0.1)),
        multistart(&unit(2, 4.0)),
        multistart(&DerivedParams::new(1, 2.0, 0.3, 0.3, 1.0).unwrap()),
    ];
    let mut worst = 0.0f64;
    let mut checked = 0;
    for set in &sets {
        for p in set.points() {
            let law = boundary_law(p, &set.params).unwrap();
            for mode in MODES {
                for n in 1..=2 {
                    let shape = TreeShape::new(set.params.k, n, mode).unwrap();
                    worst = worst.max(check_compatibility(&shape, &set.params, &law).unwrap());
                    checked += 1;
                }
            }
        }
    }
    let params = unit(2, 4.0);
    let mut control = f64::INFINITY;
    for p in sets[1].points() {
        let law = boundary_law(p, &params).unwrap();
        let mut z = law.z;
        z.0[3] *= 2.0;
        let bad = BoundaryLaw::from_z(z).unwrap();
        for mode in MODES {
            let shape = TreeShape::new(2, 2, mode).unwrap();
            control = control.min(check_compatibility(&shape, &params, &bad).unwrap());
        }
    }
    outcome(
        worst < 1e-10 && control > 1e-3,
        format!("compatibility: max violation {worst:.1e} over {checked} checks (< 1e-10), perturbed-law minimum {control:.3e} (> 1e-3)"),
    )
}

fn criterion_6() -> Outcome {
    let mut mu0 = 0.0f64;
    for theta in [0.1, 0.3, 1.0, 2.0, 3.0, 5.0, 10.0, 100.0] {
        let params = unit(2, theta);
        let w = VertexWeight::from_point([1.0, 1.0, 1.0]);
        for sigma in SIGMA_PAIRS {
            let table = edge_conditional(sigma, &params, &w);
            for (sx, sy) in SIGMA_PAIRS {
                let agree = if sx == sy { theta } else { 1.0 };
                mu0 = mu0.max((table.get(sx, sy) - agree / (2.0 * (1.0 + theta))).abs());
            }
        }
    }
    let (v1, _) = k2_roots(4.0);
    let expected = 4.0 * v1 * v1 / (4.0 * v1 * v1 + 2.0 * v1 + 4.0);
    let w1 = VertexWeight::from_point([1.0, v1, v1]);
    let mu1 =
        max_abs(SIGMA_PAIRS.map(|s| (edge_conditional(s, &unit(2, 4.0), &w1).pp - expected).abs()));

    let params = DerivedParams::new(2, 0.1, 2.0, 2.0, 1.0).unwrap();
    let w3 = VertexWeight::from_point([0.0402350, 1.5976066, 0.4316947]);
    let pp = edge_conditional((P, P), &params, &w3).as_array();
    let printed = [0.347, 0.324, 0.324, 0.005];
    let mu3 = max_abs((0..4).map(|i| (pp[i] - printed[i]).abs()));
    let mp = edge_conditional((M, P), &params, &w3).as_array();
    outcome(
        mu0 < 1e-14 && mu1 < 1e-12 && mu3 < 0.01,
        format!(
            "edge conditionals: mu0 max deviation {mu0:.1e}, mu1(theta=4) = {expected:.6} with deviation {mu1:.1e} (< 1e-12), mu3 | (+1,+1) = ({:.3}, {:.3}, {:.3}, {:.3}) vs (0.347, 0.324, 0.324, 0.005), max diff {mu3:.4} (< 0.01); mu3 | (-1,+1) = ({:.3}, {:.3}, {:.3}, {:.3}) reported only",
            pp[0], pp[1], pp[2], pp[3], mp[0], mp[1], mp[2], mp[3]
        ),
    )
}

/// Brute-force hidden posterior straight from the factorized weight.
fn brute_posterior(problem: &InferenceProblem) -> Vec<(Vec<Spin>, f64)> {
    let tree = Tree::new(problem.shape).unwrap();
    let n = tree.len();
    let d = &problem.derived;
    let emission = |s: Spin, o: Spin| match (s, o) {
        (M, M) => 1.0,
        (M, P) => d.a,
        (P, M) => d.b,
        (P, P) => d.c,
    };
    let power = if n == 1 && problem.shape.root_mode == RootMode::Full {
        (d.k as f64 + 1.0) / d.k as f64
    } else {
        1.0
    };
    let field = |s: Spin, o: Spin| problem.law.z.get(s, o).powf(power);
    let boundary = tree.boundary_range();
    let mut out = Vec::with_capacity(1 << n);
    let mut total = 0.0;
    for bits in 0..(1usize << n) {
        let s: Vec<Spin> = (0..n).map(|x| Spin::from_bit(bits >> x)).collect();
        let mut w = 1.0;
        for x in 0..n {
            w *= emission(s[x], problem.sigma[x]);
            if boundary.contains(&x) {
                w *= field(s[x], problem.sigma[x]);
            }
            if let Some(p) = tree.parent_index(x) {
                if s[p] == s[x] {
                    w *= d.theta;
                }
            }
        }
        total += w;
        out.push((s, w));
    }
    for entry in &mut out {
        entry.1 /= total;
    }
    out
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let k1 = DerivedParams::new(1, 2.0, 0.3, 0.3, 1.0).unwrap();
    let settings = [
        multistart(&k1),
        multistart(&unit(2, 4.0)),
        multistart(&unit(2, 0.1)),
        multistart(&DerivedParams::new(2, 0.1, 2.0, 2.0, 1.0).unwrap()),
    ];
    let mut deviation = 0.0f64;
    let mut map_misses = 0;
    let mut instances = 0;
    for set in &settings {
        for point in set.points() {
            let law = boundary_law(point, &set.params).unwrap();
            for mode in MODES {
                for n in 0..=2 {
                    let shape = TreeShape::new(set.params.k, n, mode).unwrap();
                    for _ in 0..20 {
                        let sigma = (0..shape.ball_len(n))
                            .map(|_| Spin::from_bit(rng.gen_range(0..2)))
                            .collect();
                        let problem = InferenceProblem::new(shape, set.params, law, sigma).unwrap();
                        let posterior = brute_posterior(&problem);
                        let bp = bp_marginals(&problem).unwrap();
                        for x in 0..bp.rows.len() {
                            let plus: f64 = posterior
                                .iter()
                                .filter(|(s, _)| s[x] == P)
                                .map(|(_, p)| p)
                                .sum();
                            deviation = deviation.max((bp.prob(x, P) - plus).abs());
                        }
                        let best = posterior.iter().map(|(_, p)| *p).fold(0.0, f64::max);
                        let map = map_estimate(&problem).unwrap();
                        let got = posterior.iter().find(|(s, _)| *s == map).unwrap().1;
                        if got < best * (1.0 - 1e-12) {
                            map_misses += 1;
                        }
                        instances += 1;
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        deviation < 1e-10 && map_misses == 0 && elapsed < 30.0,
        format!("BP exactness: {instances} instances, max marginal deviation {deviation:.1e} (< 1e-10), MAP misses {map_misses}, {elapsed:.2} s (< 30 s)"),
    )
}

fn criterion_8() -> Outcome {
    let k1 = DerivedParams::new(1, 2.0, 0.3, 0.3, 1.0).unwrap();
    let sets = [
        multistart(&k1),
        multistart(&unit(2, 4.0)),
        multistart(&unit(2, 0.1)),
    ];
    let mut tv = 0.0f64;
    for set in &sets {
        for point in set.points() {
            let law = boundary_law(point, &set.params).unwrap();
            for mode in MODES {
                let shape = TreeShape::new(set.params.k, 2, mode).unwrap();
                let kernel = markov_kernel(&shape, &set.params, &law).unwrap();
                let mu = finite_volume(&shape, &set.params, &law).unwrap();
                let tree = Tree::new(shape).unwrap();
                for (x, y) in tree.edge_indices() {
                    let pair = mu.pair_marginal(x, y);
                    for (parent, row) in pair.iter().enumerate() {
                        let total: f64 = row.iter().sum();
                        let d: f64 = (0..4)
                            .map(|c| (row[c] / total - kernel.rows[parent][c]).abs())
                            .sum();
                        tv = tv.max(0.5 * d);
                    }
                }
            }
        }
    }

    let point: FixedPoint3 = sets[0].solutions[0].point;
    let law = boundary_law(&point, &k1).unwrap();
    let shape = TreeShape::full(1, 3).unwrap();
    let tree = Tree::new(shape).unwrap();
    let kernel = markov_kernel(&shape, &k1, &law).unwrap();
    let mu = finite_volume(&shape, &k1, &law).unwrap();
    let samples = 100_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut site = [0usize; 4];
    let mut pair = [[0usize; 4]; 4];
    for _ in 0..samples {
        let draw = kernel.sample_with(&tree, &mut rng).unwrap();
        let r = draw.state(0).index();
        site[r] += 1;
        pair[r][draw.state(1).index()] += 1;
    }
    let n = samples as f64;
    let z = |count: usize, p: f64| (count as f64 / n - p).abs() / (p * (1.0 - p) / n).sqrt();
    let exact_site = mu.vertex_marginal(0);
    let exact_pair = mu.pair_marginal(0, 1);
    let mut z_max = 0.0f64;
    for s in BilayerState::ALL {
        let i = s.index();
        z_max = z_max.max(z(site[i], exact_site[i]));
        for j in 0..4 {
            z_max = z_max.max(z(pair[i][j], exact_pair[i][j]));
        }
    }
    outcome(
        tv < 1e-10 && z_max < 3.0,
        format!("sampler: kernel vs enumeration max TV {tv:.1e} (< 1e-10), 1e5 samples max |z| over root site and root-edge pair cells = {z_max:.2} (< 3)"),
    )
}

fn criterion_9() -> Outcome {
    let params = [
        unit(2, 0.1),
        unit(2, 0.2),
        unit(2, 0.5),
        unit(2, 2.0),
        unit(2, 4.0),
        unit(3, 10.0),
        DerivedParams::new(1, 2.0, 0.3, 0.3, 1.0).unwrap(),
        DerivedParams::new(2, 0.1, 2.0, 2.0, 1.0).unwrap(),
        DerivedParams::new(2, 0.1, 0.5, 0.5, 1.0).unwrap(),
        DerivedParams::new(2, 1.3, 0.5, 0.5, 1.0).unwrap(),
    ];
    let residual = max_abs(params.iter().flat_map(|p| {
        multistart(p)
            .points()
            .map(|s| s.residual)
            .collect::<Vec<_>>()
    }));
    let dir = std::env::temp_dir().join(format!("cayley-gibbs-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("verify.json");
    let status = Command::new(env!("CARGO_BIN_EXE_cayley-gibbs"))
        .args(["verify", "--output", path.to_str().unwrap()])
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    let report: serde_json::Value = std::fs::read_to_string(&path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or(serde_json::Value::Null);
    let _ = std::fs::remove_dir_all(&dir);
    let report_pass = report["pass"].as_bool() == Some(true);
    outcome(
        residual < 1e-9 && status.success() && report_pass,
        format!(
            "residual gate: max reported residual {residual:.1e} (< 1e-9), verify exit {:?}, report pass = {report_pass}",
            status.code()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(usize, fn() -> Outcome); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let mut failed = 0;
    for (n, check) in criteria {
        let result = check();
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {n}: {}", result.summary);
        failed += usize::from(!result.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
