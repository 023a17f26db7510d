//! Acceptance criteria. Each criterion prints one PASS/FAIL line with the
//! measured quantities; the test fails if any criterion fails.

use std::f64::consts::PI;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use num_rational::Ratio;
use unet::circuit::{circuit_to_un, random_sqc, un_to_circuit};
use unet::eval::{evaluate_matrix, heisenberg_transform, site_operator};
use unet::flow::{all_cuts, concatenate_crossover, net_flow, FlowValue, NetFlow};
use unet::gallery::{self, ShiftVariant, StackedVariant};
use unet::gaussian::{csd, cut_ranks, decompose_gaussian, many_body_rep, verify_mode_network_homomorphism};
use unet::graph::{validate, Network};
use unet::linalg::{self, frobenius, haar_unitary, phase_distance, unitarity_residual, CMat, C64};
use unet::ops::DenseOperator;
use unet::qca::{self, MargolusScheme};
use unet::Error;

type Outcome = (bool, String);

fn line(text: &str) {
    // Written to the raw handle so the lines survive libtest's capture.
    let _ = writeln!(std::io::stderr(), "{text}");
}

fn haar(n: usize, seed: u64) -> CMat {
    haar_unitary(n, &mut linalg::rng(seed))
}

fn c1_dag_unitarity() -> Outcome {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..200 {
        let net = gallery::build_random_dag(8, 4, seed).unwrap();
        assert!(validate(&net).is_valid_unitary_network(), "seed {seed} is not a valid DAG");
        worst = worst.max(unitarity_residual(&evaluate_matrix(&net).unwrap()));
    }
    let secs = t.elapsed().as_secs_f64();
    (worst < 1e-8 && secs < 60.0, format!("200 random DAGs, max residual {worst:.2e}, {secs:.2} s"))
}

fn c2_self_trace() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (da, db) in [(2, 3), (3, 2), (2, 4)] {
        let net = gallery::build_self_trace(da, db).unwrap();
        let m = evaluate_matrix(&net).unwrap();
        let exact = m == CMat::identity(da, da) * C64::new(db as f64, 0.0);
        let flagged = !validate(&net).dag && unitarity_residual(&m) > 0.5;
        ok &= exact && flagged;
        notes.push(format!("dim_A={da} dim_B={db}: exact={exact} flagged={flagged}"));
    }
    (ok, notes.join("; "))
}

fn c3_universality() -> Outcome {
    let mut worst = 0.0f64;
    for d in [2, 3] {
        for seed in 0..50 {
            let u = haar(d * d * d, 1000 * d as u64 + seed);
            let net = gallery::build_universality_padding(&u, d, 3).unwrap();
            let (m, _, _) = site_operator(&net).unwrap();
            worst = worst.max(frobenius(&(m - u)));
        }
    }
    (worst < 1e-10, format!("50 unitaries each for d=2,3, max residual {worst:.2e}"))
}

fn c4_gnvw() -> Outcome {
    let mut ok = true;
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let m = if seed % 2 == 0 { 2 } else { 3 };
        let b_even = [1, 2, 4][(seed % 3) as usize];
        let s = MargolusScheme::haar(m, 2, b_even, seed).unwrap();
        let net = qca::margolus_to_bilayer(&s).unwrap();
        let flow = match net_flow(&net) {
            NetFlow::Uniform { value: FlowValue::Exact(r) } => r,
            other => {
                ok = false;
                line(&format!("      seed {seed}: net flow not exact: {other:?}"));
                continue;
            }
        };
        // log_2(b/a) with a = 2 and b ∈ {1, 2, 4}.
        let want = Ratio::from_integer(b_even.trailing_zeros() as i64 - 1);
        ok &= -flow == want;
        let (u, _, _) = site_operator(&net).unwrap();
        worst = worst.max(frobenius(&(u - s.dense_supercells().unwrap())));
    }
    (ok && worst < 1e-9, format!("20 schemes on 4 or 6 cells, exact flow match={ok}, max |U - v·w| {worst:.2e}"))
}

fn gallery_bilayers() -> Vec<(&'static str, Network)> {
    vec![
        ("shift obc", gallery::build_shift(5, 2, ShiftVariant::ObcBilayer).unwrap()),
        ("shift pbc", gallery::build_shift(5, 2, ShiftVariant::PbcWrapped).unwrap()),
        ("shift d=3", gallery::build_shift(4, 3, ShiftVariant::ObcBilayer).unwrap()),
        ("swap staircase", gallery::build_shift(5, 2, ShiftVariant::SwapStaircaseSqc).unwrap()),
        ("stc forward", gallery::build_stacked_cnot(6, StackedVariant::Forward).unwrap()),
        ("stc reversed", gallery::build_stacked_cnot(6, StackedVariant::Reversed).unwrap()),
        ("stc pbc cut", gallery::build_stacked_cnot(6, StackedVariant::PbcCut).unwrap()),
        ("stc ti open", gallery::build_stacked_cnot(6, StackedVariant::TiOpen).unwrap()),
        ("kw", gallery::build_kw(6).unwrap()),
        ("stacked xy", gallery::build_stacked_xy(6, 0.4).unwrap()),
        ("stacked xy ti", gallery::build_stacked_xy_ti(6, 0.4).unwrap()),
        ("identity", gallery::build_identity_bilayer(5, 2, 2).unwrap()),
        ("redundant identity", gallery::build_redundant_identity(5, 2, 2).unwrap()),
        ("four layer pbc", gallery::build_four_layer_pbc(4, 2, 2, 3).unwrap()),
        ("margolus", qca::margolus_to_bilayer(&MargolusScheme::haar(3, 2, 4, 5).unwrap()).unwrap()),
        ("haar bilayer (2,2)", gallery::build_haar_bilayer(5, 2, 2, 2, 11).unwrap()),
        ("haar bilayer (4,2)", gallery::build_haar_bilayer(5, 2, 4, 2, 11).unwrap()),
        ("haar bilayer (2,4)", gallery::build_haar_bilayer(5, 2, 2, 4, 11).unwrap()),
        ("haar bilayer (3,1)", gallery::build_haar_bilayer(5, 2, 3, 1, 11).unwrap()),
    ]
}

fn c5_cut_independence() -> Outcome {
    let mut ok = true;
    let mut cuts = 0;
    for (name, net) in gallery_bilayers() {
        let flows: Vec<FlowValue> = all_cuts(&net).iter().map(|c| c.flow).collect();
        cuts += flows.len();
        let uniform = flows.len() >= 2 && flows.windows(2).all(|w| w[0] == w[1]);
        // log_2 3 has no rational form; there equality must still be bit-exact.
        let rational = !name.ends_with("(3,1)");
        let exact = !rational || flows.iter().all(|f| f.is_exact());
        if !(uniform && exact && matches!(net_flow(&net), NetFlow::Uniform { .. })) {
            ok = false;
            line(&format!("      {name}: flows {:?}", flows.iter().map(|f| f.to_f64()).collect::<Vec<_>>()));
        }
    }
    let witness = match net_flow(&gallery::build_nonuniform_impurity().unwrap()) {
        NetFlow::Undefined { cut_a, flow_a, cut_b, flow_b, .. } => {
            cut_a != cut_b && flow_a != flow_b
        }
        _ => false,
    };
    (ok && witness, format!("{cuts} interior cuts over 19 bilayers all uniform and exact={ok}; impurity undefined with two witness cuts={witness}"))
}

fn c6_shift_dichotomy() -> Outcome {
    let obc = gallery::build_shift(4, 2, ShiftVariant::ObcBilayer).unwrap();
    let pbc = gallery::build_shift(4, 2, ShiftVariant::PbcWrapped).unwrap();
    let sqc = gallery::build_shift(4, 2, ShiftVariant::SwapStaircaseSqc).unwrap();
    let f = |n: &Network| net_flow(n).value().map(|v| v.to_f64());
    let (fo, fp, fs) = (f(&obc), f(&pbc), f(&sqc));
    let a = site_operator(&pbc).unwrap().0;
    let b = site_operator(&sqc).unwrap().0;
    // Dense oracle: cyclic right shift |x1 x2 x3 x4⟩ → |x4 x1 x2 x3⟩.
    let shift = linalg::permutation_matrix(&[2; 4], &[3, 0, 1, 2]);
    let res = phase_distance(&a, &b);
    let res_oracle = phase_distance(&a, &shift);
    let ok = fo == Some(1.0) && fp == Some(1.0) && fs == Some(0.0) && res < 1e-8 && res_oracle < 1e-8;
    (ok, format!("flows obc={fo:?} pbc={fp:?} staircase={fs:?}; |U_shift - U_swap| up to phase {res:.2e}"))
}

fn pauli_matches(net: &Network, input: &[(i64, char)], want: &[(i64, char)]) -> bool {
    let img = heisenberg_transform(net, &DenseOperator::pauli_string(input)).unwrap();
    let want = DenseOperator::pauli_string(want);
    if img.sites != want.sites {
        return false;
    }
    // Integer entries, equal after rounding.
    img.matrix.iter().zip(want.matrix.iter()).all(|(a, b)| {
        let r = C64::new(a.re.round(), a.im.round());
        (a - r).norm() < 1e-12 && r == *b
    })
}

fn run_table(net: &Network, table: &[(Vec<(i64, char)>, Vec<(i64, char)>)]) -> (usize, Vec<String>) {
    let mut bad = Vec::new();
    for (i, w) in table {
        if !pauli_matches(net, i, w) {
            bad.push(format!("{i:?}"));
        }
    }
    (table.len(), bad)
}

fn string(c: char, sites: std::ops::RangeInclusive<i64>) -> Vec<(i64, char)> {
    sites.map(|s| (s, c)).collect()
}

fn c7_stacked_cnot() -> Outcome {
    let n = 8i64;
    let fwd = gallery::build_stacked_cnot(n as usize, StackedVariant::Forward).unwrap();
    let mut table = Vec::new();
    for k in 1..n {
        table.push((vec![(k, 'X')], vec![(k, 'X'), (k + 1, 'X')]));
    }
    table.push((vec![(n, 'X')], vec![(n, 'X')]));
    for k in 1..=n {
        table.push((vec![(k, 'Z')], string('Z', 1..=k)));
    }
    let (nf, bad_f) = run_table(&fwd, &table);
    let rev = gallery::build_stacked_cnot(n as usize, StackedVariant::Reversed).unwrap();
    let mut table = Vec::new();
    for k in 1..=n {
        table.push((vec![(k, 'X')], string('X', k..=n)));
        let mut y: Vec<(i64, char)> = if k > 1 { vec![(k - 1, 'Z')] } else { vec![] };
        y.push((k, 'Y'));
        y.extend(string('X', k + 1..=n));
        table.push((vec![(k, 'Y')], y));
        let z = if k > 1 { vec![(k - 1, 'Z'), (k, 'Z')] } else { vec![(k, 'Z')] };
        table.push((vec![(k, 'Z')], z));
    }
    let (nr, bad_r) = run_table(&rev, &table);
    let ok = bad_f.is_empty() && bad_r.is_empty();
    (ok, format!("n=8: forward {}/{nf} images exact, reversed {}/{nr} exact {:?}", nf - bad_f.len(), nr - bad_r.len(), [bad_f, bad_r].concat()))
}

fn c8_kw() -> Outcome {
    let n = 6i64;
    let kw = gallery::build_kw(n as usize).unwrap();
    let mut table = Vec::new();
    for k in 2..n {
        table.push((vec![(k, 'X')], vec![(k, 'Z'), (k + 1, 'Z')]));
        table.push((vec![(k - 1, 'Z'), (k, 'Z')], vec![(k, 'X')]));
    }
    let (total, bad) = run_table(&kw, &table);
    (bad.is_empty(), format!("n=6 interior: {}/{total} images exact {bad:?}", total - bad.len()))
}

fn c9_concatenation() -> Outcome {
    let pairs = [((2, 2), (4, 4)), ((4, 2), (2, 1)), ((2, 4), (1, 2)), ((3, 3), (1, 1))];
    let mut worst = 0.0f64;
    let mut valid = true;
    let mut infeasible = true;
    for seed in 0..20u64 {
        let ((b1, t1), (b2, t2)) = pairs[(seed % 4) as usize];
        let a = gallery::build_haar_bilayer(6, 2, b1, t1, 2 * seed).unwrap();
        let b = gallery::build_haar_bilayer(6, 2, b2, t2, 2 * seed + 1).unwrap();
        let junction = 2 + (seed % 3) as i64;
        let c = concatenate_crossover(&a, &b, junction, seed).unwrap();
        valid &= validate(&c).is_valid_unitary_network();
        worst = worst.max(unitarity_residual(&evaluate_matrix(&c).unwrap()));
        let shift = gallery::build_shift(6, 2, ShiftVariant::ObcBilayer).unwrap();
        let id = gallery::build_identity_bilayer(6, 2, 2).unwrap();
        infeasible &= matches!(concatenate_crossover(&shift, &id, junction, seed), Err(Error::Infeasible(_)));
    }
    (valid && worst < 1e-8 && infeasible, format!("20 equal-flow pairs valid DAGs={valid}, max residual {worst:.2e}; shift+identity infeasible={infeasible}"))
}

fn c10_sqc_round_trip() -> Outcome {
    let mut worst = 0.0f64;
    let mut flows_zero = true;
    for seed in 0..50u64 {
        let wires = 2 + (seed % 7) as usize;
        let gates = 1 + (seed % 6) as usize;
        let c = random_sqc(wires, gates, 3, 2, seed).unwrap();
        let (net, _) = circuit_to_un(&c).unwrap();
        flows_zero &= net_flow(&net).value().map(|v| v.to_f64()) == Some(0.0);
        let (back, _) = un_to_circuit(&net).unwrap();
        worst = worst.max(phase_distance(&back.matrix().unwrap(), &c.matrix().unwrap()));
    }
    (worst < 1e-8 && flows_zero, format!("50 SQCs (2-8 wires, 1-6 gates), max residual {worst:.2e}, all net flows 0={flows_zero}"))
}

fn c11_csd() -> Outcome {
    let t = Instant::now();
    let (mut rec, mut sv_err) = (0.0f64, 0.0f64);
    for seed in 0..1000u64 {
        let n = 2 + (seed % 15) as usize;
        let p = 1 + (seed / 15) as usize % (n - 1);
        let q = 1 + (seed / 7) as usize % (n - 1);
        let u = haar(n, seed);
        let f = csd(&u, p, q).unwrap();
        rec = rec.max(frobenius(&(f.reconstruct() - &u)));
        let mut s = f.s.clone();
        s.sort_by(|a, b| b.total_cmp(a));
        let sv = linalg::singular_values_desc(&u.view((p, 0), (n - p, q)).into_owned());
        for (k, a) in s.iter().enumerate() {
            sv_err = sv_err.max((a - sv.get(k).copied().unwrap_or(0.0)).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    (
        rec < 1e-10 && sv_err < 1e-10 && secs < 120.0,
        format!("1000 instances N=2..16, max reconstruction {rec:.2e}, max |s - sv(U^Ba)| {sv_err:.2e}, {secs:.2} s"),
    )
}

fn c12_gaussian() -> Outcome {
    let layouts: [&[usize]; 6] = [&[2, 2, 2], &[1, 2, 3], &[3, 3], &[2, 2, 3], &[1, 3, 3], &[2, 2, 2, 2]];
    let (mut rec, mut hom) = (0.0f64, 0.0f64);
    let mut ranks_ok = true;
    for (i, sizes) in layouts.iter().enumerate() {
        for seed in 0..5u64 {
            let n: usize = sizes.iter().sum();
            let u = haar(n, 100 * i as u64 + seed);
            let net = decompose_gaussian(&u, sizes, 0.0).unwrap();
            rec = rec.max(frobenius(&(net.contract().unwrap().matrix - &u)));
            ranks_ok &= net.bond_modes() == cut_ranks(&u, sizes, 1e-10);
            if n <= 6 {
                hom = hom.max(verify_mode_network_homomorphism(&net).unwrap());
                let v = haar(n, 7000 + seed);
                let lhs = many_body_rep(&u).unwrap().matrix * many_body_rep(&v).unwrap().matrix;
                hom = hom.max(phase_distance(&lhs, &many_body_rep(&(&u * &v)).unwrap().matrix));
            }
        }
    }
    (
        rec < 1e-8 && ranks_ok && hom < 1e-8,
        format!("30 unitaries on 6-8 modes, max reconstruction {rec:.2e}, bond modes = rank oracle {ranks_ok}, homomorphism residual {hom:.2e}"),
    )
}

/// Least-squares slope and R² of ln f against r, computed here independently
/// of the library fit.
fn loglinear(radii: &[usize], f: &[f64]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = radii.iter().zip(f).filter(|(_, &v)| v > 1e-13).map(|(&r, &v)| (r as f64, v.ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    (-1.0 / slope, sxy * sxy / (sxx * syy))
}

fn c13_tails() -> Outcome {
    let t = Instant::now();
    let n = 16;
    let x = 12;
    let radii: Vec<usize> = (0..=9).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, theta) in [("pi/6", PI / 6.0), ("pi/4", PI / 4.0), ("pi/3", PI / 3.0)] {
        let gates = gallery::stacked_gate_sequence(n, &linalg::xy_gate(theta));
        let p = qca::alpu_tails_circuit(n, &gates, x, &radii).unwrap();
        let (xi, r2) = loglinear(&p.radii, &p.f_values);
        let lib = p.fit.as_ref().map(|f| f.xi).unwrap_or(f64::NAN);
        let formula = 1.0 / -(1.0 - theta.cos().powi(4)).sqrt().ln();
        let ratio = xi / formula;
        let alt = -1.0 / (theta / 2.0).sin().ln();
        let pass = r2 >= 0.95 && p.monotone && (0.5..=2.0).contains(&ratio) && (lib - xi).abs() < 1e-9;
        ok &= pass;
        parts.push(format!(
            "theta={name}: xi={xi:.3} formula={formula:.3} ratio={ratio:.3} R2={r2:.4} monotone={} (-1/ln sin(theta/2)={alt:.3})",
            p.monotone
        ));
    }
    let secs = t.elapsed().as_secs_f64();
    (ok && secs < 300.0, format!("N=16, x=12, r=0..9: {}; {secs:.2} s", parts.join("; ")))
}

fn c14_wrapping() -> Outcome {
    let shift = qca::wrap_pbc(&gallery::build_shift(4, 2, ShiftVariant::ObcBilayer).unwrap()).unwrap();
    let cnot = qca::wrap_pbc(&gallery::build_stacked_cnot(4, StackedVariant::TiOpen).unwrap()).unwrap();
    let (m, _, _) = site_operator(&cnot.net).unwrap();
    // Both |1111⟩ and |0000⟩ land on |0000⟩.
    let witness = m[(0, 0b1111)].norm() > 1e-9 && m[(0, 0)].norm() > 1e-9;
    let xy: Vec<f64> = [4, 6, 8, 10]
        .iter()
        .map(|&l| qca::wrap_pbc(&gallery::build_stacked_xy_ti(l, PI / 4.0).unwrap()).unwrap().residual)
        .collect();
    let decreasing = xy.windows(2).all(|w| w[1] < w[0]);
    let ok = shift.residual < 1e-10 && cnot.residual > 1e-6 && witness && decreasing;
    (
        ok,
        format!(
            "shift residual {:.2e}; TI CNOT residual {:.3} witness={witness}; XY residuals L=4,6,8,10 {:?} decreasing={decreasing}",
            shift.residual,
            cnot.residual,
            xy.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>()
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 14] = [
        ("DAG networks are unitary", c1_dag_unitarity),
        ("self-trace loop gives dim_B times identity", c2_self_trace),
        ("bilayer universality padding", c3_universality),
        ("net flow equals the GNVW index", c4_gnvw),
        ("cut independence of net flow", c5_cut_independence),
        ("shift versus SWAP staircase", c6_shift_dichotomy),
        ("stacked-CNOT Pauli images", c7_stacked_cnot),
        ("Kramers-Wannier Pauli images", c8_kw),
        ("concatenation feasibility", c9_concatenation),
        ("SQC round trip", c10_sqc_round_trip),
        ("cosine-sine decomposition", c11_csd),
        ("Gaussian decomposition", c12_gaussian),
        ("stacked-XY tails", c13_tails),
        ("periodic wrapping", c14_wrapping),
    ];
    let mut failed = Vec::new();
    for (k, (name, f)) in criteria.iter().enumerate() {
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                (false, format!("panicked: {}", msg.unwrap_or_default()))
            }
        };
        line(&format!("{} {:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" }, k + 1));
        if !pass {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
