//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use isorc::harness::{self, Experiment, ExperimentSpec};
use isorc::homotopy::{self, PunctureGrid, Word};
use isorc::lattice::{
    build_lattice, point_segment_distance, IsoradialLattice, Topology, TrackAngles,
};
use isorc::loops;
use isorc::rcm::{self, BoundaryConditions, Configuration, Explorer, ModelParams, WeightedGraph};
use isorc::rng;
use isorc::sixvertex;
use isorc::transform::{self, StarTrianglePatch, TrackExchanger};

struct Line {
    id: usize,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn params(q: f64) -> ModelParams {
    ModelParams::new(q).unwrap()
}

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn star_triangle() -> (bool, String) {
    let mut r = rng::stream(101, 0);
    let mut worst: f64 = 0.0;
    for q in [1.0, 1.5, 2.0, 3.0, 4.0] {
        for _ in 0..5 {
            let patch = StarTrianglePatch::from_triangle_angles(
                &params(q),
                transform::random_triangle_angles(&mut r),
            )
            .unwrap();
            worst = worst
                .max(transform::star_triangle_tv(&patch))
                .max(transform::triangle_star_tv(&patch));
        }
    }
    (
        worst < 1e-12,
        format!("max TV {worst:.2e} (< 1e-12) over 25 patches, both directions"),
    )
}

fn track_exchange() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for q in [1.0, 2.0, 4.0] {
        let lat = build_lattice(
            TrackAngles::new(vec![PI / 3.0, FRAC_PI_2]).unwrap(),
            4,
            2,
            Topology::Torus,
        )
        .unwrap();
        assert_eq!(lat.num_edges(), 16);
        worst = worst.max(transform::exchange_tv(&lat, 1, &params(q)).unwrap());
    }
    (
        worst < 1e-10,
        format!("max TV {worst:.2e} (< 1e-10), 16-edge torus, q in {{1,2,4}}"),
    )
}

fn normalization() -> (bool, String) {
    let mut r = rng::stream(103, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let q = r.gen_range(1.0..=4.0);
        let patch = StarTrianglePatch::from_triangle_angles(
            &params(q),
            transform::random_triangle_angles(&mut r),
        )
        .unwrap();
        worst = worst
            .max((patch.forward_sum() - 1.0).abs())
            .max((patch.reverse_sum() - 1.0).abs());
    }
    (
        worst < 1e-11,
        format!("max |sum - 1| {worst:.2e} (< 1e-11) over 1000 patches"),
    )
}

fn off_row_partition(lat: &IsoradialLattice, cfg: &Configuration, row: usize) -> Vec<usize> {
    let g = WeightedGraph::from_lattice(lat, &params(1.0));
    let mut d = rcm::clusters(&g, cfg, &BoundaryConditions::none());
    let mut names = std::collections::HashMap::new();
    (0..lat.num_vertices())
        .filter(|&v| lat.vertex(v).row != row)
        .map(|v| {
            let root = d.find(v);
            let n = names.len();
            *names.entry(root).or_insert(n)
        })
        .collect()
}

fn connectivity() -> (bool, String) {
    let mut r = rng::stream(104, 0);
    let angles = TrackAngles::new(vec![1.0, 0.6, 2.1, 1.4]).unwrap();
    let cases = [
        (Topology::Box, 5, 2),
        (Topology::Box, 4, 3),
        (Topology::CylinderHorizontal, 3, 2),
        (Topology::CylinderHorizontal, 12, 2),
        (Topology::Torus, 4, 2),
        (Topology::Torus, 12, 2),
    ];
    let (mut total, mut bad) = (0, 0);
    let mut methods = Vec::new();
    for (k, &(topo, w, i)) in cases.iter().enumerate() {
        let lat = build_lattice(angles.clone(), w, 4, topo).unwrap();
        methods.push(format!("{:?}", TrackExchanger::method_for(&lat, i)));
        let q = [1.0, 2.0, 3.0][k % 3];
        let g = WeightedGraph::from_lattice(&lat, &params(q));
        let bc = transform::exchange_bc(&lat);
        let mut ex = TrackExchanger::new(params(q));
        let mut cfg = rcm::sample_mcmc(&g, &bc, q, 0, 50, k as u64);
        let mut hb = Explorer::new(&g, &bc);
        let n = if k + 1 == cases.len() {
            10_000 - 5 * 1670
        } else {
            1670
        };
        for _ in 0..n {
            rcm::heat_bath_sweep(&g, &mut cfg, q, &mut hb, &mut r);
            let out = ex.exchange(&lat, &cfg, i, &mut r).unwrap();
            let row = i % lat.rows();
            total += 1;
            if off_row_partition(&lat, &cfg, row) != off_row_partition(&out.lattice, &out.cfg, row)
            {
                bad += 1;
            }
        }
    }
    methods.dedup();
    (
        bad == 0,
        format!(
            "{bad} violations in {total} exchanges ({})",
            methods.join(", ")
        ),
    )
}

fn heat_bath() -> (bool, String) {
    let lat = build_lattice(
        TrackAngles::new(vec![1.2, 1.9, 0.8]).unwrap(),
        2,
        3,
        Topology::Box,
    )
    .unwrap();
    assert_eq!(lat.num_edges(), 12);
    let q = 2.0;
    let g = WeightedGraph::from_lattice(&lat, &params(q));
    let bc = BoundaryConditions::none();
    let exact = rcm::exact_distribution(&g, &bc, q).unwrap();
    // single-edge kernels, detailed balance
    let mut ex = Explorer::new(&g, &bc);
    let mut residual: f64 = 0.0;
    for x in 0..exact.len() {
        let cx = Configuration::from_bits(x as u64, 12);
        for e in 0..12 {
            let y = x ^ (1 << e);
            let cy = Configuration::from_bits(y as u64, 12);
            let px = rcm::conditional_open(&g, &cx, q, &mut ex, e);
            let py = rcm::conditional_open(&g, &cy, q, &mut ex, e);
            let to_y = if cy.open[e] { px } else { 1.0 - px };
            let to_x = if cx.open[e] { py } else { 1.0 - py };
            residual = residual.max((exact[x] * to_y - exact[y] * to_x).abs());
        }
    }
    let n = 100_000;
    let mut r = rng::stream(105, 0);
    let mut cfg = Configuration::empty(12);
    for _ in 0..rcm::default_burn_in(3) {
        rcm::heat_bath_sweep(&g, &mut cfg, q, &mut ex, &mut r);
    }
    let mut counts = vec![0.0; exact.len()];
    for _ in 0..n {
        for _ in 0..10 {
            rcm::heat_bath_sweep(&g, &mut cfg, q, &mut ex, &mut r);
        }
        counts[cfg.to_bits() as usize] += 1.0 / n as f64;
    }
    // exact i.i.d. reference of the same size, for the plug-in noise floor
    let cdf: Vec<f64> = exact
        .iter()
        .scan(0.0, |s, p| {
            *s += p;
            Some(*s)
        })
        .collect();
    let mut iid = vec![0.0; exact.len()];
    for _ in 0..n {
        let u: f64 = r.gen();
        let k = cdf.partition_point(|&c| c < u).min(exact.len() - 1);
        iid[k] += 1.0 / n as f64;
    }
    let (tv_mcmc, tv_iid) = (tv(&counts, &exact), tv(&iid, &exact));
    let pass = residual < 1e-12 && (tv_mcmc - tv_iid).abs() < 0.02;
    (
        pass,
        format!(
            "reversibility residual {residual:.1e} (< 1e-12); plug-in TV {tv_mcmc:.4} vs i.i.d. exact-sample TV {tv_iid:.4}, |diff| < 0.02 \
             (raw TV < 0.02 is below the 1e5-sample noise floor)"
        ),
    )
}

fn euler() -> (bool, String) {
    let lat = build_lattice(
        TrackAngles::constant(FRAC_PI_2, 3).unwrap(),
        2,
        3,
        Topology::Box,
    )
    .unwrap();
    let mut bad = 0;
    for bits in 0..1u64 << 12 {
        let cfg = Configuration::from_bits(bits, 12);
        if loops::trace_loops(&lat, &cfg).unwrap().len() != loops::euler_loop_count(&lat, &cfg) {
            bad += 1;
        }
    }
    (
        bad == 0,
        format!("{bad} mismatches over 4096 configurations"),
    )
}

fn random_order_reduce(w: &[i32], r: &mut rng::Rng) -> Vec<i32> {
    let mut w = w.to_vec();
    loop {
        let n = w.len();
        let pairs: Vec<usize> = (0..n)
            .filter(|&i| n >= 2 && w[i] == -w[(i + 1) % n])
            .collect();
        let Some(&i) = pairs.choose(r) else { break };
        let j = (i + 1) % n;
        w.remove(i.max(j));
        w.remove(i.min(j));
    }
    w
}

fn homotopy_suite() -> (bool, String) {
    let mut r = rng::stream(107, 0);
    let letters = [-3, -2, -1, 1, 2, 3];
    let mut disagree = 0;
    let mut nontrivial_inverse = 0;
    for _ in 0..10_000 {
        let n = r.gen_range(0..16);
        let w: Vec<i32> = (0..n).map(|_| *letters.choose(&mut r).unwrap()).collect();
        let canon = homotopy::reduce(&Word(w.clone()));
        let other = homotopy::reduce(&Word(random_order_reduce(&w, &mut r)));
        if other != canon {
            disagree += 1;
        }
        let ww = Word(w.clone()).concat(&Word(w).inverse());
        if !homotopy::reduce(&ww).is_empty() {
            nontrivial_inverse += 1;
        }
    }
    let grid = PunctureGrid::new(0.5).unwrap();
    let mut changed_by_jitter = 0;
    for _ in 0..1000 {
        let (i0, j0) = (r.gen_range(-4..3), r.gen_range(-4..3));
        let (wi, wj) = (r.gen_range(1..4), r.gen_range(1..4));
        let (x0, y0) = (i0 as f64 * 0.5 + 0.25, j0 as f64 * 0.5 + 0.25);
        let (x1, y1) = (x0 + wi as f64 * 0.5, y0 + wj as f64 * 0.5);
        let corners = [[x0, y0], [x1, y0], [x1, y1], [x0, y1]];
        let base: Vec<[f64; 2]> = (0..4)
            .flat_map(|k| {
                let (a, b) = (corners[k], corners[(k + 1) % 4]);
                (0..8).map(move |s| {
                    let t = s as f64 / 8.0;
                    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
                })
            })
            .collect();
        let delta = 0.2;
        let clear = grid.points.iter().all(|&x| {
            (0..base.len())
                .all(|i| point_segment_distance(x, base[i], base[(i + 1) % base.len()]) > delta)
        });
        assert!(clear);
        let jit: Vec<[f64; 2]> = base
            .iter()
            .map(|p| {
                let (a, d): (f64, f64) = (
                    r.gen_range(0.0..std::f64::consts::TAU),
                    r.gen_range(0.0..delta),
                );
                [p[0] + d * a.cos(), p[1] + d * a.sin()]
            })
            .collect();
        if homotopy::homotopy_class(&jit, &grid).unwrap()
            != homotopy::homotopy_class(&base, &grid).unwrap()
        {
            changed_by_jitter += 1;
        }
    }
    let mut dragged = 0;
    for _ in 0..100 {
        let (i0, j0) = (r.gen_range(-3..1), r.gen_range(-3..1));
        let (wi, wj) = (r.gen_range(1..3), r.gen_range(1..3));
        let (x0, y0) = (i0 as f64 * 0.5 - 0.25, j0 as f64 * 0.5 - 0.25);
        let (x1, y1) = (x0 + wi as f64 * 0.5, y0 + wj as f64 * 0.5);
        let ry = y0 + 0.25 + 0.5 * r.gen_range(0..wj) as f64;
        let before = vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]];
        let after = vec![
            [x0, y0],
            [x1, y0],
            [x1, ry - 0.2],
            [x1 + 0.5, ry - 0.2],
            [x1 + 0.5, ry + 0.2],
            [x1, ry + 0.2],
            [x1, y1],
            [x0, y1],
        ];
        if homotopy::homotopy_class(&after, &grid).unwrap()
            != homotopy::homotopy_class(&before, &grid).unwrap()
        {
            dragged += 1;
        }
    }
    let pass = disagree == 0 && nontrivial_inverse == 0 && changed_by_jitter == 0 && dragged == 100;
    (
        pass,
        format!(
            "confluence disagreements {disagree}/10000; w.w^-1 non-empty {nontrivial_inverse}/10000; \
             jitter class changes {changed_by_jitter}/1000; drag class changes {dragged}/100"
        ),
    )
}

fn commutation() -> (bool, String) {
    let mut r = rng::stream(108, 0);
    let mut worst: f64 = 0.0;
    for n in [4, 6] {
        for q in [1.0, 2.0, 3.0] {
            for _ in 0..5 {
                let (t1, t2) = (r.gen_range(0.05..PI - 0.05), r.gen_range(0.05..PI - 0.05));
                worst = worst.max(sixvertex::commutator_norm(n, q, t1, t2).unwrap());
            }
        }
    }
    let w1 = sixvertex::weights_from(2.0, PI / 3.0).unwrap();
    let mut w2 = sixvertex::weights_from(2.0, PI / 2.0).unwrap();
    w2.c *= 1.1;
    let control = sixvertex::commutator_norm_weights(4, &w1, &w2).unwrap();
    (
        worst < 1e-9 && control > 1e-6,
        format!("max commutator {worst:.1e} (< 1e-9); off-curve control {control:.1e} (> 1e-6)"),
    )
}

fn eigen_structure() -> (bool, String) {
    let mut monotone = true;
    let mut worst_res: f64 = 0.0;
    let mut frozen_ok = true;
    for q in [1.0, 2.0, 4.0] {
        for th in [PI / 3.0, PI / 2.0] {
            let w = sixvertex::weights_from(q, th).unwrap();
            let spec = sixvertex::sector_spectrum(8, &w).unwrap();
            monotone &= spec.windows(2).all(|p| p[0].lambda >= p[1].lambda);
            worst_res = spec.iter().map(|e| e.residual).fold(worst_res, f64::max);
            // all-up row: every vertex of type a (arrows right) or of type b (arrows left)
            let row_weight =
                (0..8).fold(1.0, |acc, _| acc * w.a) + (0..8).fold(1.0, |acc, _| acc * w.b);
            frozen_ok &= spec[4].lambda == row_weight;
        }
    }
    (
        monotone && frozen_ok && worst_res < 1e-10,
        format!(
            "non-increasing in k: {monotone}; frozen lambda == a^N + b^N: {frozen_ok} \
             (periodic rows admit both horizontal completions, so a^N alone is not attainable); max residual {worst_res:.1e} (< 1e-10)"
        ),
    )
}

fn run_exp(experiment: Experiment, q: f64, samples: usize, seed: u64) -> harness::Outcome {
    harness::run(&ExperimentSpec {
        experiment,
        q,
        samples,
        seed,
        chains: 1,
        output: None,
    })
    .unwrap()
}

fn iic() -> (bool, String) {
    let a = run_exp(
        Experiment::IicRatio {
            alpha: PI / 3.0,
            beta: FRAC_PI_2,
            radius: 16,
            tolerance: 0.05,
        },
        1.0,
        20_000,
        110,
    )
    .report;
    let b = run_exp(
        Experiment::IicRatio {
            alpha: FRAC_PI_2,
            beta: FRAC_PI_2,
            radius: 16,
            tolerance: 0.04,
        },
        1.0,
        20_000,
        111,
    )
    .report;
    (
        a.pass && b.pass,
        format!(
            "alpha=pi/3: {:.4} +- {:.4} vs {:.5} (tol 0.05); alpha=beta: {:.4} +- {:.4} vs 0.5 (tol 0.04); R=16, 20000 events each",
            a.estimate, a.stderr, a.target.unwrap(), b.estimate, b.stderr
        ),
    )
}

fn crossing() -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for (q, seed) in [(1.0, 112), (2.0, 113)] {
        let rep = run_exp(
            Experiment::CrossingUniversality {
                alpha: PI / 3.0,
                size: 200,
                allowance: 0.03,
            },
            q,
            10_000,
            seed,
        )
        .report;
        pass &= rep.pass;
        parts.push(format!(
            "q={q}: P(pi/3)={:.4} P(pi/2)={:.4} |diff|={:.4} < 0.03 + 3*{:.4}",
            rep.details["p_alpha"].as_f64().unwrap(),
            rep.details["p_square"].as_f64().unwrap(),
            rep.estimate.abs(),
            rep.stderr
        ));
    }
    (pass, parts.join("; "))
}

fn determinism() -> (bool, String) {
    let specs = [
        ExperimentSpec {
            experiment: Experiment::CrossingUniversality {
                alpha: PI / 3.0,
                size: 24,
                allowance: 0.03,
            },
            q: 2.0,
            samples: 300,
            seed: 7,
            chains: 3,
            output: None,
        },
        ExperimentSpec {
            experiment: Experiment::IicRatio {
                alpha: PI / 3.0,
                beta: FRAC_PI_2,
                radius: 8,
                tolerance: 0.05,
            },
            q: 1.0,
            samples: 200,
            seed: 7,
            chains: 2,
            output: None,
        },
        ExperimentSpec {
            experiment: Experiment::ArmDecay {
                sigma: "010".into(),
                radii: vec![3, 6],
            },
            q: 1.0,
            samples: 100,
            seed: 7,
            chains: 2,
            output: None,
        },
    ];
    let same = specs
        .iter()
        .all(|s| harness::run(s).unwrap().csv == harness::run(s).unwrap().csv);
    (
        same,
        format!(
            "bit-identical CSV on rerun for {} experiments: {same}",
            specs.len()
        ),
    )
}

fn main() {
    type Check = fn() -> (bool, String);
    let checks: [(usize, &'static str, Check); 12] = [
        (1, "star-triangle exactness", star_triangle),
        (2, "track-exchange exactness", track_exchange),
        (3, "coupling normalization", normalization),
        (4, "connectivity preservation", connectivity),
        (5, "heat-bath correctness", heat_bath),
        (6, "loop Euler relation", euler),
        (7, "homotopy suite", homotopy_suite),
        (8, "transfer-matrix commutation", commutation),
        (9, "eigenvalue structure", eigen_structure),
        (10, "IIC ratio", iic),
        (11, "crossing universality", crossing),
        (12, "determinism", determinism),
    ];
    let mut lines = Vec::new();
    for (id, title, f) in checks {
        let t = Instant::now();
        let (pass, detail) = f();
        let line = Line {
            id,
            title,
            pass,
            detail: format!("{detail} [{:.1}s]", t.elapsed().as_secs_f64()),
        };
        println!(
            "{} {:>2} {}: {}",
            if line.pass { "PASS" } else { "FAIL" },
            line.id,
            line.title,
            line.detail
        );
        lines.push(line);
    }
    let failed: Vec<usize> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    println!(
        "{}/{} criteria passed",
        lines.len() - failed.len(),
        lines.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
