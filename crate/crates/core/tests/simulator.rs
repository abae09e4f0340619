use shelltrack::fields::{ReferenceField, SirenConfig};
use shelltrack::geometry::{AnalyticChart, Rect};
use shelltrack::shell::{quasistatic_simulate, ChartEdge, Constraint, ForceField, MaterialModel, SimulationConfig};

/// Centre deflection coefficient of a simply supported square plate under
/// uniform load, `w = c q a⁴ / B`, from the double sine series.
fn navier_coefficient() -> f64 {
    let mut s = 0.0;
    for m in (1..200).step_by(2) {
        for n in (1..200).step_by(2) {
            let sign = if ((m + n) / 2 - 1) % 2 == 0 { 1.0 } else { -1.0 };
            let (m, n) = (m as f64, n as f64);
            s += sign / (m * n * (m * m + n * n).powi(2));
        }
    }
    16.0 / std::f64::consts::PI.powi(6) * s
}

fn plate(q: f64, iterations: usize) -> f64 {
    let r = ReferenceField::Analytic(AnalyticChart::flat(Rect::UNIT));
    let m = MaterialModel::default();
    let force = ForceField {
        body: [0.0; 3],
        pressure: q,
        constraints: [ChartEdge::Left, ChartEdge::Right, ChartEdge::Bottom, ChartEdge::Top]
            .map(|edge| Constraint::Edge { edge })
            .to_vec(),
    };
    let cfg = SirenConfig { hidden_layers: 2, width: 32, omega: 2.0, ..SirenConfig::ndf(7) };
    let sim = SimulationConfig { iterations, points: 256, lr: 2e-3, ..Default::default() };
    let (p, rep) = quasistatic_simulate(&r, &m, &force, &cfg, &sim).unwrap();
    eprintln!("{:?}", rep.energies);
    let u = p.displacement(&r, &[[0.5, 0.5]], 0).unwrap();
    u[0].value()[2]
}

#[test]
fn navier_series_coefficient() {
    assert!((navier_coefficient() - 0.00406).abs() < 5e-6);
}

#[test]
fn simply_supported_plate() {
    let m = MaterialModel::default();
    let q = 2e-9;
    let w = plate(q, 1500);
    let want = navier_coefficient() * q / m.bending();
    eprintln!("w = {w:.6e}, series {want:.6e}");
    assert!((w - want).abs() <= 0.1 * want);
}

#[test]
fn logged_energy_non_increasing() {
    let r = ReferenceField::Analytic(AnalyticChart::flat(Rect::UNIT));
    let force = ForceField {
        body: [0.0; 3],
        pressure: 2e-9,
        constraints: vec![Constraint::Edge { edge: ChartEdge::Left }, Constraint::Edge { edge: ChartEdge::Right }],
    };
    let cfg = SirenConfig { hidden_layers: 2, width: 16, omega: 2.0, ..SirenConfig::ndf(3) };
    let sim = SimulationConfig { iterations: 400, points: 144, lr: 2e-3, log_every: 25, ..Default::default() };
    let (_, rep) = quasistatic_simulate(&r, &MaterialModel::default(), &force, &cfg, &sim).unwrap();
    for w in rep.energies.windows(2) {
        let (a, b) = (w[0].1, w[1].1);
        assert!(b <= a + 0.01 * a.abs(), "{:?}", rep.energies);
    }
}

#[test]
fn gravity_sag_monotone_in_load() {
    let r = ReferenceField::Analytic(AnalyticChart::flat(Rect::UNIT));
    let cfg = SirenConfig { hidden_layers: 2, width: 16, omega: 2.0, ..SirenConfig::ndf(5) };
    let mut sag = Vec::new();
    for g in [1e-9, 2e-9, 4e-9] {
        let force = ForceField {
            body: [0.0, 0.0, -g],
            pressure: 0.0,
            constraints: vec![Constraint::Edge { edge: ChartEdge::Left }, Constraint::Edge { edge: ChartEdge::Right }],
        };
        let sim = SimulationConfig { iterations: 400, points: 144, lr: 2e-3, ..Default::default() };
        let (p, _) = quasistatic_simulate(&r, &MaterialModel::default(), &force, &cfg, &sim).unwrap();
        sag.push(-p.displacement(&r, &[[0.5, 0.5]], 0).unwrap()[0].value()[2]);
    }
    assert!(sag[0] > 0.0 && sag[0] < sag[1] && sag[1] < sag[2], "{sag:?}");
}
