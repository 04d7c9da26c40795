//! Acceptance criteria evaluated against the default experiment configuration.

use std::sync::Arc;
use std::time::Instant;

use holo_gate::dynamics::propagate_state;
use holo_gate::dynamics::{DrivenHamiltonian, StateVector};
use holo_gate::effective::{bright_state, block_hamiltonian, eigens_h_i0, paper_blocks};
use holo_gate::effective::{z1_closed_form_eigenvalues, BlockId};
use holo_gate::experiments::{
    cmd_adiabatic_compare, cmd_traces, full_model_infidelity, lindblad_fidelity, lindblad_trace_drift,
    robustness_point, rk4_order_ratio, z_minus_drift, zero_rate_channel_defect, DissipationChannel, ExperimentConfig,
    Variations,
};
use holo_gate::gates::{
    average_fidelity, gate_matrix, holonomy_check, phase_distance, rotation, BasisOrder, Family, FidelityForm,
    GateBackend,
};
use holo_gate::model::{AtomicDecay, SystemParams};
use holo_gate::sta::{designed_pulses, fitted_pulses, verify_dressed_frame, AngleSchedule, FrameCheckConfig};
use holo_gate::sta::PulseFamily;
use holo_gate::{Result, C64};
use nalgebra::DMatrix;

/// Result of one criterion.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {} [{}] {} ({:.1} s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.seconds
        )
    }
}

type Eval = fn(&ExperimentConfig) -> Result<(bool, String)>;

pub const CRITERIA: [(u8, &str, Eval); 10] = [
    (1, "shortcut exactness", shortcut_exactness),
    (2, "full-model gate fidelity", full_model_fidelity),
    (3, "pulse amplitude", pulse_amplitude),
    (4, "eigenstructure", eigenstructure),
    (5, "holonomy conditions", holonomy_conditions),
    (6, "dissipation", dissipation),
    (7, "robustness", robustness),
    (8, "traces", traces),
    (9, "adiabatic baseline", adiabatic_baseline),
    (10, "property suites", property_suites),
];

pub fn evaluate(id: u8, cfg: &ExperimentConfig) -> Outcome {
    let (_, title, eval) = CRITERIA[(id - 1) as usize];
    let start = Instant::now();
    let (passed, detail) = match eval(cfg) {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    Outcome {
        id,
        title,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let v = f()?;
    Ok((v, start.elapsed().as_secs_f64()))
}

fn cmax(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn shortcut_exactness(cfg: &ExperimentConfig) -> Result<(bool, String)> {
    let ((infidelity, udev), secs) = timed(|| {
        let p = &cfg.system;
        let pulses = cfg.pulses_for(PulseFamily::Designed)?;
        let b = GateBackend::effective(p, &pulses, &cfg.state_integrator(p.gate_time))?;
        let fe = average_fidelity(cfg.grid_n, &b, Family::Psi0, FidelityForm::Standard)?;
        let GateBackend::Unitary { u, .. } = &b else {
            unreachable!("effective backend is unitary")
        };
        let r = rotation(p.vartheta);
        let rc = DMatrix::from_fn(8, 8, |i, j| C64::new(r[(i, j)], 0.0));
        let upm = &rc * u * rc.transpose();
        let target = gate_matrix(p.vartheta, BasisOrder::Zpm).complex();
        Ok((fe.infidelity().abs(), cmax(&(upm - target))))
    })?;
    let ok = infidelity <= 1e-6 && udev <= 1e-6 && secs < 5.0;
    Ok((ok, format!("|1-F_e| = {infidelity:.3e}, max|U_e - diag(1..1,-1)| = {udev:.3e}, runtime {secs:.2} s")))
}

pub fn full_model_fidelity(cfg: &ExperimentConfig) -> Result<(bool, String)> {
    let t = cfg.system.gate_time;
    let pulses = fitted_pulses(t)?;
    let at = |lt: f64| -> Result<f64> {
        let p = SystemParams {
            lambda: lt / t,
            upsilon: lt / t,
            ..cfg.system
        };
        full_model_infidelity(cfg, &p, &pulses, Family::Psi0)
    };
    let (nominal, secs) = timed(|| at(150.0))?;
    let mut trend = Vec::new();
    for lt in [60.0, 90.0, 120.0] {
        trend.push(at(lt)?);
    }
    trend.push(nominal);
    let monotone = trend.windows(2).all(|w| w[1] < w[0]);
    let ok = nominal <= 1e-3 && monotone && secs < 120.0;
    let shown: Vec<String> = trend.iter().map(|v| format!("{v:.2e}")).collect();
    Ok((
        ok,
        format!(
            "1-F_e(150) = {nominal:.3e}, lambda T 60..150: [{}] monotone={monotone}, runtime {secs:.1} s",
            shown.join(", ")
        ),
    ))
}

pub fn pulse_amplitude(cfg: &ExperimentConfig) -> Result<(bool, String)> {
    let t = cfg.system.gate_time;
    let designed = cfg.pulses_for(PulseFamily::Designed)?;
    let peak = (0..=4000)
        .map(|k| {
            let (a, b) = designed.omegas(t * k as f64 / 4000.0);
            a.abs().max(b.abs())
        })
        .fold(0.0, f64::max)
        * t;
    let quarter = designed.omegas(t / 4.0).0 * t;
    let ok = (peak - 28.0).abs() <= 0.05 * 28.0 && (quarter + 19.7).abs() <= 0.5;
    Ok((ok, format!("peak T = {peak:.3} (28 +- 5%), Omega_1(T/4) T = {quarter:.3} (-19.7 +- 0.5)")))
}

pub fn eigenstructure(_cfg: &ExperimentConfig) -> Result<(bool, String)> {
    let z1 = paper_blocks()?.into_iter().find(|b| b.id == BlockId::ZPlus1).expect("Z+1 block");
    let grid = [30.0, 75.0, 150.0, 220.0, 300.0];
    let (mut eig, mut bright) = (0.0f64, 0.0f64);
    for &l in &grid {
        for &u in &grid {
            let num = eigens_h_i0(&z1, l, u)?.eigenvalues;
            let cf = z1_closed_form_eigenvalues(l, u);
            for (a, b) in num.iter().zip(cf.iter()) {
                eig = eig.max((a - b).abs() / l.max(u));
            }
            let h = block_hamiltonian(&z1, l, u)?;
            bright = bright.max((&h * bright_state(l, u)).norm() / l.max(u));
        }
    }
    let equal = SystemParams {
        lambda: 150.0,
        upsilon: 150.0,
        ..SystemParams::default()
    };
    let n3 = (equal.n3() - 1.0 / 5f64.sqrt()).abs();
    let ok = eig <= 1e-10 && bright <= 1e-12 && n3 <= 1e-15;
    Ok((ok, format!("eigenvalue residual {eig:.2e}, |H psi3| {bright:.2e}, |N3 - 1/sqrt5| {n3:.1e}")))
}

pub fn holonomy_conditions(cfg: &ExperimentConfig) -> Result<(bool, String)> {
    let p = &cfg.system;
    let sched: Arc<dyn AngleSchedule> = Arc::new(cfg.schedule(cfg.amplitude)?);
    let h = holonomy_check(sched, p, &cfg.state_integrator(p.gate_time), 400)?;
    let ok = h.projector_residual < 1e-6 && h.max_dynamical < 1e-8;
    Ok((
        ok,
        format!("projector residual {:.2e}, max dynamical element {:.2e}", h.projector_residual, h.max_dynamical),
    ))
}

/// `F_to` at `gamma`, `kappa_c`, `kappa_f` = `rate` lambda in turn.
pub fn dissipation_fidelities(cfg: &ExperimentConfig, p: &SystemParams, rate: f64) -> Result<[f64; 3]> {
    let pulses = cfg.pulses_for(cfg.pulses)?;
    let mut out = [0.0; 3];
    for (k, ch) in [DissipationChannel::Gamma, DissipationChannel::KappaC, DissipationChannel::KappaF]
        .into_iter()
        .enumerate()
    {
        out[k] = lindblad_fidelity(cfg, &ch.apply(p, rate), &pulses)?;
    }
    Ok(out)
}

pub fn dissipation(cfg: &ExperimentConfig) -> Result<(bool, String)> {
    let (f, secs) = timed(|| dissipation_fidelities(cfg, &cfg.system, 0.01))?;
    let lowest = f[0] < f[1] && f[0] < f[2];
    let ok = f.iter().all(|&x| x >= 0.986) && lowest && secs < 600.0;
    Ok((
        ok,
        format!(
            "F_to gamma {:.5}, kappa_c {:.5}, kappa_f {:.5} (>= 0.986), gamma lowest={lowest}, runtime {secs:.0} s",
            f[0], f[1], f[2]
        ),
    ))
}

/// The `gamma` point of the dissipation criterion under `AtomicDecay::PerAtom`.
pub fn per_atom_gamma_fidelity(cfg: &ExperimentConfig) -> Result<f64> {
    let p = SystemParams {
        atomic_decay: AtomicDecay::PerAtom,
        ..cfg.system
    };
    let pulses = cfg.pulses_for(cfg.pulses)?;
    lindblad_fidelity(cfg, &DissipationChannel::Gamma.apply(&p, 0.01), &pulses)
}

pub fn robustness(cfg: &ExperimentConfig) -> Result<(bool, String)> {
    let mut cases: Vec<(String, Variations)> = Vec::new();
    for s in [-0.1, 0.1] {
        cases.push((format!("dl={s:+}"), Variations { delta_lambda: s, ..Default::default() }));
        cases.push((format!("du={s:+}"), Variations { delta_upsilon: s, ..Default::default() }));
        cases.push((format!("dT={s:+}"), Variations { delta_t: s, ..Default::default() }));
    }
    cases.push(("dO=-0.1".into(), Variations { delta_omega: -0.1, ..Default::default() }));
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (name, v) in &cases {
        let r = robustness_point(cfg, v)?;
        worst = worst.max(r);
        parts.push(format!("{name}: {r:.2e}"));
    }
    Ok((worst <= 5e-3, format!("worst 1-F_to {worst:.2e} (<= 5e-3); {}", parts.join(", "))))
}

pub fn traces(cfg: &ExperimentConfig) -> Result<(bool, String)> {
    let t = cmd_traces(cfg)?;
    let target = t.series.iter().find(|s| s.label == "gl,gr,+").expect("target trace");
    let pop = target.final_population();
    let phase = phase_distance(target.final_phase(), std::f64::consts::PI);
    let others: Vec<(String, f64)> = t
        .series
        .iter()
        .filter(|s| s.label != "gl,gr,+")
        .map(|s| (s.label.clone(), s.max_population_deviation()))
        .collect();
    let worst = others.iter().map(|o| o.1).fold(0.0, f64::max);
    let ok = pop >= 0.999 && phase <= 0.05 && worst < 1e-2;
    let shown: Vec<String> = others.iter().map(|(l, d)| format!("|{l}> {d:.3e}")).collect();
    Ok((
        ok,
        format!(
            "|gl,gr,+> population {pop:.5}, phase offset {phase:.3e} rad; others max deviation {}",
            shown.join(", ")
        ),
    ))
}

pub fn adiabatic_baseline(cfg: &ExperimentConfig) -> Result<(bool, String)> {
    let r = cmd_adiabatic_compare(cfg)?;
    let (at1, at5) = (r.adiabatic_at(1.0), r.adiabatic_at(5.0));
    let sta = r.sta_final();
    let (Some(a1), Some(a5)) = (at1, at5) else {
        return Ok((false, "tau grid misses T or 5T".into()));
    };
    let ok = a1 < 0.99 && a5 >= 0.99 && sta >= 0.999;
    Ok((ok, format!("adiabatic F_e(T) {a1:.4}, F_e(5T) {a5:.4}; STA F_e(T) {sta:.6}")))
}

pub fn property_suites(cfg: &ExperimentConfig) -> Result<(bool, String)> {
    let p = &cfg.system;
    let fitted = fitted_pulses(p.gate_time)?;
    let ratio = rk4_order_ratio(p, &fitted, 200)?;
    let (drift, _) = lindblad_trace_drift(cfg, &fitted, 0.005)?;
    let zero_rate = zero_rate_channel_defect(cfg, &fitted)?;
    let zminus = z_minus_drift(p, &fitted, &cfg.state_integrator(p.gate_time))?;
    let sched = cfg.schedule(cfg.amplitude)?;
    let frame = verify_dressed_frame(&sched, &FrameCheckConfig::default())?;
    let frame_res = frame.max_offdiag.max(frame.max_tdse_residual);
    let eff = {
        let designed = designed_pulses(Arc::new(sched), p.n3())?;
        let h = DrivenHamiltonian::effective(&designed, p.n3());
        let tr = propagate_state(&h, &StateVector::basis(3, 0), &cfg.state_integrator(p.gate_time))?;
        (tr.last().norm() - 1.0).abs()
    };
    let ok = (8.0..=32.0).contains(&ratio)
        && drift <= 1e-7
        && zero_rate <= 1e-6
        && zminus <= 1e-10
        && frame_res < 1e-8
        && eff < 1e-9;
    Ok((
        ok,
        format!(
            "rk4 ratio {ratio:.2}, trace drift {drift:.1e}, zero-rate defect {zero_rate:.1e}, Z- drift {zminus:.1e}, frame residual {frame_res:.1e}"
        ),
    ))
}
