//! Control problem specifications.
//!
//! A problem is a pair of Hamiltonians on the same register: the easy initial
//! one whose ground state is cheap to prepare, and the target one whose
//! ground state we want to reach. The built-in family covers the hydrogen
//! molecule in a minimal basis at four bond distances, with the initial
//! Hamiltonian diagonal in the Hartree-Fock determinant basis and the target
//! adding the antidiagonal correlation coupling. Problems can also be read
//! from and written to JSON files.

use crate::linalg::{Complex64, ComplexMatrix, MAX_QUBITS};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const PROBLEM_SCHEMA_VERSION: u32 = 1;

/// Bond distances, in angstrom, with built-in Hamiltonian data.
pub const BUILTIN_H2_DISTANCES: [f64; 4] = [1.0, 1.5, 2.0, 2.5];

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("no built-in problem at bond distance {0}; available: 1.0, 1.5, 2.0, 2.5")]
    UnknownDistance(String),
    #[error("malformed problem file: {0}")]
    Format(String),
    #[error("invalid problem: {0}")]
    Validation(String),
}

/// A validated control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub label: String,
    pub n_qubits: usize,
    pub bond_distance_angstrom: Option<f64>,
    pub h_initial: ComplexMatrix,
    pub h_final: ComplexMatrix,
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Builds a spec from parts, enforcing the invariants all callers may
    /// then rely on: square matrices of dimension `2^n_qubits`, Hermitian
    /// and real-valued to within `1e-12`.
    pub fn new(
        label: String,
        n_qubits: usize,
        bond_distance_angstrom: Option<f64>,
        h_initial: ComplexMatrix,
        h_final: ComplexMatrix,
    ) -> Result<Self, ProblemError> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(ProblemError::Validation(format!(
                "n_qubits must be between 1 and {MAX_QUBITS}, got {n_qubits}"
            )));
        }
        let dim = 1usize << n_qubits;
        for (name, m) in [("h_initial", &h_initial), ("h_final", &h_final)] {
            if m.dim() != dim {
                return Err(ProblemError::Validation(format!(
                    "{name} is {}x{} but n_qubits={n_qubits} needs {dim}x{dim}",
                    m.dim(),
                    m.dim()
                )));
            }
            let dev = m.hermiticity_deviation();
            if dev > 1e-12 {
                return Err(ProblemError::Validation(format!(
                    "{name} is not Hermitian: largest deviation {dev:.3e}"
                )));
            }
            let max_im = m.data().iter().map(|z| z.im.abs()).fold(0.0f64, f64::max);
            if max_im > 1e-12 {
                return Err(ProblemError::Validation(format!(
                    "{name} must be real-valued, largest imaginary part {max_im:.3e}"
                )));
            }
        }
        Ok(Self {
            label,
            n_qubits,
            bond_distance_angstrom,
            h_initial,
            h_final,
        })
    }
}

/// `d/dlambda` of the interpolated Hamiltonian, a constant matrix.
pub fn d_h_ad_d_lambda(p: &ProblemSpec) -> ComplexMatrix {
    p.h_final
        .sub(&p.h_initial)
        .expect("spec invariants guarantee matching dimensions")
}

struct H2Row {
    distance: f64,
    diagonal: [f64; 4],
    antidiagonal: f64,
}

/// Hartree-Fock orbital energies on the diagonal and the full-interaction
/// antidiagonal coupling, both in Hartree, for the minimal-basis hydrogen
/// molecule. The target Hamiltonian shares the diagonal and fills the whole
/// antidiagonal with the coupling.
const H2_TABLE: [H2Row; 4] = [
    H2Row {
        distance: 1.0,
        diagonal: [-0.5490812, -1.0661087, 0.00400595, -0.5490812],
        antidiagonal: 0.19679058,
    },
    H2Row {
        distance: 1.5,
        diagonal: [-0.6610488, -0.91087353, -0.3944683, -0.6610488],
        antidiagonal: 0.22953594,
    },
    H2Row {
        distance: 2.0,
        diagonal: [-0.66539884, -0.7837927, -0.5412806, -0.66539884],
        antidiagonal: 0.25913846,
    },
    H2Row {
        distance: 2.5,
        diagonal: [-0.649429, -0.7029436, -0.5944048, -0.649429],
        antidiagonal: 0.28221005,
    },
];

/// The built-in hydrogen problem at one of the tabulated bond distances.
pub fn builtin_h2(bond_distance_angstrom: f64) -> Result<ProblemSpec, ProblemError> {
    let row = H2_TABLE
        .iter()
        .find(|row| (row.distance - bond_distance_angstrom).abs() < 1e-9)
        .ok_or_else(|| ProblemError::UnknownDistance(format!("{bond_distance_angstrom}")))?;

    let mut h_initial = ComplexMatrix::zeros(4);
    let mut h_final = ComplexMatrix::zeros(4);
    for i in 0..4 {
        h_initial.set(i, i, Complex64::new(row.diagonal[i], 0.0));
        h_final.set(i, i, Complex64::new(row.diagonal[i], 0.0));
        h_final.set(i, 3 - i, Complex64::new(row.antidiagonal, 0.0));
    }
    ProblemSpec::new(
        format!("h2_sto3g_{:.1}", row.distance),
        2,
        Some(row.distance),
        h_initial,
        h_final,
    )
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    im: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct ProblemJson {
    schema_version: u32,
    label: String,
    n_qubits: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bond_distance_angstrom: Option<f64>,
    h_initial: MatrixJson,
    h_final: MatrixJson,
}

fn matrix_from_json(name: &str, m: &MatrixJson) -> Result<ComplexMatrix, ProblemError> {
    let n = m.re.len();
    let check_shape = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
    if !check_shape(&m.re) || !m.im.as_ref().map_or(true, check_shape) {
        return Err(ProblemError::Format(format!("{name} is not square")));
    }
    let mut out = ComplexMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let im = m.im.as_ref().map_or(0.0, |rows| rows[i][j]);
            out.set(i, j, Complex64::new(m.re[i][j], im));
        }
    }
    Ok(out)
}

fn matrix_to_json(m: &ComplexMatrix) -> MatrixJson {
    let n = m.dim();
    let grab = |f: fn(Complex64) -> f64| {
        (0..n)
            .map(|i| (0..n).map(|j| f(m.get(i, j))).collect())
            .collect::<Vec<Vec<f64>>>()
    };
    let has_imaginary = m.data().iter().any(|z| z.im != 0.0);
    MatrixJson {
        re: grab(|z| z.re),
        im: has_imaginary.then(|| grab(|z| z.im)),
    }
}

/// Parses and validates a problem from JSON text.
pub fn problem_from_json(text: &str) -> Result<ProblemSpec, ProblemError> {
    let raw: ProblemJson =
        serde_json::from_str(text).map_err(|e| ProblemError::Format(e.to_string()))?;
    if raw.schema_version != PROBLEM_SCHEMA_VERSION {
        return Err(ProblemError::Format(format!(
            "unsupported schema_version {}, expected {PROBLEM_SCHEMA_VERSION}",
            raw.schema_version
        )));
    }
    ProblemSpec::new(
        raw.label,
        raw.n_qubits,
        raw.bond_distance_angstrom,
        matrix_from_json("h_initial", &raw.h_initial)?,
        matrix_from_json("h_final", &raw.h_final)?,
    )
}

pub fn load_problem(path: &Path) -> Result<ProblemSpec, ProblemError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ProblemError::Format(format!("cannot read {}: {e}", path.display())))?;
    problem_from_json(&text)
}

pub fn problem_to_json(p: &ProblemSpec) -> String {
    let raw = ProblemJson {
        schema_version: PROBLEM_SCHEMA_VERSION,
        label: p.label.clone(),
        n_qubits: p.n_qubits,
        bond_distance_angstrom: p.bond_distance_angstrom,
        h_initial: matrix_to_json(&p.h_initial),
        h_final: matrix_to_json(&p.h_final),
    };
    serde_json::to_string_pretty(&raw).expect("problem serialization cannot fail")
}

pub fn write_problem(p: &ProblemSpec, path: &Path) -> Result<(), ProblemError> {
    std::fs::write(path, problem_to_json(p) + "\n")
        .map_err(|e| ProblemError::Format(format!("cannot write {}: {e}", path.display())))
}
