//! Thin-shell elasticity: strains, the linear isotropic energy density, the
//! physics loss over tracked states and a quasistatic forward simulator.

pub mod physics;
pub mod simulate;
pub mod strain;

pub use physics::{physics_loss, physics_loss_at, sample_energy, PhysicsEval};
pub use simulate::{
    quasistatic_simulate, ChartEdge, Constraint, ForceField, PinnedField, SimulationConfig,
    SimulationReport,
};
pub use strain::{
    curvature_change_oracle, deformation_gradient, deformation_gradient_cartesian, strain_at, strain_from_displacement, strains,
    LiftedReference, StrainState,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffmath::Ring;
use crate::error::{Error, Result};
use crate::geometry::Sym2;

/// Material set. `rho` is carried for completeness; the quasistatic energy
/// does not use it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    pub rho: f64,
    pub h: f64,
    #[serde(rename = "E")]
    pub young: f64,
    pub nu: f64,
}

impl Default for MaterialModel {
    fn default() -> Self {
        Self { rho: 0.0, h: 1.2e-3, young: 5000.0, nu: 0.25 }
    }
}

impl MaterialModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.young > 0.0) || !(self.h > 0.0) {
            return Err(Error::Invalid(format!("E and h must be positive: E={}, h={}", self.young, self.h)));
        }
        if !(0.0..0.5).contains(&self.nu) {
            return Err(Error::Invalid(format!("Poisson ratio {} outside [0, 0.5)", self.nu)));
        }
        if !(self.rho >= 0.0) {
            return Err(Error::Invalid(format!("density {} must be nonnegative", self.rho)));
        }
        Ok(())
    }

    /// `D = E h / (1 − ν²)`
    pub fn in_plane(&self) -> f64 {
        self.young * self.h / (1.0 - self.nu * self.nu)
    }

    /// `B = E h³ / (12 (1 − ν²))`
    pub fn bending(&self) -> f64 {
        self.young * self.h.powi(3) / (12.0 * (1.0 - self.nu * self.nu))
    }

    /// Parses `key = value` lines (`rho`, `h`, `E`, `nu`); `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut m = MaterialModel::default();
        let mut seen = [false; 4];
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .or_else(|| line.split_once(char::is_whitespace))
                .ok_or_else(|| Error::parse(format!("material line {}", ln + 1), "expected `key = value`"))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::parse(format!("material line {}", ln + 1), format!("bad number `{}`", v.trim())))?;
            let slot = match k.trim() {
                "rho" => {
                    m.rho = v;
                    0
                }
                "h" => {
                    m.h = v;
                    1
                }
                "E" => {
                    m.young = v;
                    2
                }
                "nu" => {
                    m.nu = v;
                    3
                }
                other => {
                    return Err(Error::parse(format!("material line {}", ln + 1), format!("unknown key `{other}`")))
                }
            };
            seen[slot] = true;
        }
        if !seen[1] || !seen[2] || !seen[3] {
            return Err(Error::parse("material file", "h, E and nu are required"));
        }
        m.validate()?;
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        format!("rho = {}\nh = {}\nE = {}\nnu = {}\n", self.rho, self.h, self.young, self.nu)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// `(D, B)` for a validated material.
pub fn elastic_constants(m: &MaterialModel) -> Result<(f64, f64)> {
    m.validate()?;
    Ok((m.in_plane(), m.bending()))
}

/// Independent components `[H¹¹¹¹, H¹¹¹², H¹¹²², H¹²¹², H¹²²², H²²²²]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElasticTensor {
    pub c: [f64; 6],
}

impl ElasticTensor {
    /// Index of the symmetric pair `(p, q)` with `p, q ∈ {0: 11, 1: 12, 2: 22}`.
    fn slot(p: usize, q: usize) -> usize {
        let (p, q) = if p <= q { (p, q) } else { (q, p) };
        match (p, q) {
            (0, 0) => 0,
            (0, 1) => 1,
            (0, 2) => 2,
            (1, 1) => 3,
            (1, 2) => 4,
            _ => 5,
        }
    }

    /// `H^{αβλδ}`
    pub fn get(&self, a: usize, b: usize, l: usize, d: usize) -> f64 {
        self.c[Self::slot(a + b, l + d)]
    }

    pub fn full(&self) -> [[[[f64; 2]; 2]; 2]; 2] {
        let mut out = [[[[0.0; 2]; 2]; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for l in 0..2 {
                    for d in 0..2 {
                        out[a][b][l][d] = self.get(a, b, l, d);
                    }
                }
            }
        }
        out
    }

    /// `H^{αβλδ} T_{αβ} T_{λδ}` for symmetric `T`.
    pub fn contract<T: Ring>(&self, t: &Sym2<T>) -> T {
        let m = [1.0, 2.0, 1.0];
        let mut acc = T::zero();
        for p in 0..3 {
            for q in 0..3 {
                let w = m[p] * m[q] * self.c[Self::slot(p, q)];
                if w != 0.0 {
                    acc = acc + (t.c[p] * t.c[q]).scale(w);
                }
            }
        }
        acc
    }
}

/// `H^{αβλδ} = ν ā^{αβ}ā^{λδ} + ½(1−ν)(ā^{αλ}ā^{βδ} + ā^{αδ}ā^{βλ})`
pub fn elastic_tensor(a_up: &Sym2<f64>, nu: f64) -> ElasticTensor {
    let h = |a: usize, b: usize, l: usize, d: usize| {
        nu * a_up.get(a, b) * a_up.get(l, d)
            + 0.5 * (1.0 - nu) * (a_up.get(a, l) * a_up.get(b, d) + a_up.get(a, d) * a_up.get(b, l))
    };
    ElasticTensor {
        c: [h(0, 0, 0, 0), h(0, 0, 0, 1), h(0, 0, 1, 1), h(0, 1, 0, 1), h(0, 1, 1, 1), h(1, 1, 1, 1)],
    }
}

/// `(D ε:H:ε + B κ:H:κ) √ā`
pub fn energy_density<T: Ring>(s: &StrainState<T>, h: &ElasticTensor, d: f64, b: f64, sqrt_a: f64) -> T {
    (h.contract(&s.eps).scale(d) + h.contract(&s.kap).scale(b)).scale(sqrt_a)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ID: Sym2<f64> = Sym2 { c: [1.0, 0.0, 1.0] };

    #[test]
    fn paper_constants() {
        let m = MaterialModel { rho: 0.0, h: 1.2e-3, young: 5000.0, nu: 0.25 };
        let (d, b) = elastic_constants(&m).unwrap();
        assert!((d - 6.4).abs() <= 1e-15 * 6.4, "{d}");
        assert!((b - 7.68e-7).abs() <= 1e-15 * 7.68e-7, "{b}");
        let m0 = MaterialModel { nu: 0.0, ..m };
        assert_eq!(m0.in_plane(), m0.young * m0.h);
    }

    #[test]
    fn invalid_materials() {
        let m = MaterialModel::default();
        assert!(elastic_constants(&MaterialModel { nu: 0.5, ..m }).is_err());
        assert!(elastic_constants(&MaterialModel { young: 0.0, ..m }).is_err());
        assert!(elastic_constants(&MaterialModel { h: -1.0, ..m }).is_err());
    }

    #[test]
    fn tensor_identity_metric() {
        let h = elastic_tensor(&ID, 0.25);
        assert_eq!(h.get(0, 0, 0, 0), 1.0);
        assert_eq!(h.get(0, 0, 1, 1), 0.25);
        assert_eq!(h.get(0, 1, 0, 1), 0.375);
        let h0 = elastic_tensor(&ID, 0.0);
        assert_eq!((h0.get(0, 0, 0, 0), h0.get(0, 0, 1, 1)), (1.0, 0.0));
    }

    #[test]
    fn tensor_symmetries() {
        let a = Sym2::new(1.3, 0.2, 0.8);
        let f = elastic_tensor(&a, 0.3).full();
        for a in 0..2 {
            for b in 0..2 {
                for l in 0..2 {
                    for d in 0..2 {
                        let v = f[a][b][l][d];
                        assert_eq!(v, f[b][a][l][d]);
                        assert_eq!(v, f[a][b][d][l]);
                        assert_eq!(v, f[l][d][a][b]);
                    }
                }
            }
        }
        // direct formula matches stored components
        let h = elastic_tensor(&a, 0.3);
        let au = a;
        let direct = 0.3 * au.get(0, 1) * au.get(1, 1)
            + 0.35 * (au.get(0, 1) * au.get(1, 1) + au.get(0, 1) * au.get(1, 1));
        assert!((h.get(0, 1, 1, 1) - direct).abs() < 1e-15);
    }

    #[test]
    fn contraction_matches_full_sum() {
        let a = Sym2::new(1.1, -0.3, 0.9);
        let h = elastic_tensor(&a, 0.2);
        let t = Sym2::new(0.4, -0.7, 1.3);
        let f = h.full();
        let tf = t.full();
        let mut want = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                for l in 0..2 {
                    for d in 0..2 {
                        want += f[a][b][l][d] * tf[a][b] * tf[l][d];
                    }
                }
            }
        }
        assert!((h.contract(&t) - want).abs() < 1e-14);
    }

    #[test]
    fn energy_examples() {
        let h = elastic_tensor(&ID, 0.25);
        let zero = StrainState { eps: Sym2::<f64>::zero(), kap: Sym2::zero() };
        assert_eq!(energy_density(&zero, &h, 6.4, 7.68e-7, 1.0), 0.0);
        let s = StrainState { eps: Sym2::new(0.105, 0.0, 0.0), kap: Sym2::zero() };
        assert!((energy_density(&s, &h, 6.4, 7.68e-7, 1.0) - 0.070560).abs() < 1e-15);
        let s = StrainState { eps: Sym2::zero(), kap: Sym2::new(-1e-3, 0.0, 0.0) };
        assert!((energy_density(&s, &h, 6.4, 7.68e-7, 1.0) - 7.68e-13).abs() < 1e-27);
    }

    #[test]
    fn material_file_roundtrip() {
        let m = MaterialModel { rho: 200.0, h: 1e-3, young: 1e4, nu: 0.3 };
        assert_eq!(MaterialModel::parse(&m.to_text()).unwrap(), m);
        assert!(MaterialModel::parse("h = 1\nE = 2\n").is_err());
        assert!(MaterialModel::parse("h = 1\nE = 2\nnu = 0.1\ncolour = 3\n").is_err());
    }
}
