//! Rigid motions, aligned RMSD and internal coordinates.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::{Conformer, LigandRecord, PocketRecord};
use crate::molgraph::MolecularGraph;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("coordinate sets differ in size: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("empty coordinate set")]
    Empty,
}

pub type Point = [f64; 3];

fn vec3(p: &Point) -> Vector3<f64> {
    Vector3::new(p[0], p[1], p[2])
}

fn point(v: &Vector3<f64>) -> Point {
    [v.x, v.y, v.z]
}

/// A proper rotation: orthonormal with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Rotation {
        Rotation(Matrix3::identity())
    }

    /// Checked constructor; `None` unless orthonormal with det +1 to 1e-9.
    pub fn from_matrix(m: Matrix3<f64>) -> Option<Rotation> {
        let orthonormal = (m.transpose() * m - Matrix3::identity()).abs().max() < 1e-9;
        let proper = (m.determinant() - 1.0).abs() < 1e-9;
        (orthonormal && proper).then_some(Rotation(m))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn apply(&self, p: &Point) -> Point {
        point(&(self.0 * vec3(p)))
    }

    /// Uniform draw over the rotation group from three uniforms via a
    /// unit quaternion.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let u3: f64 = rng.random();
        let tau = std::f64::consts::TAU;
        let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
        let q = Quaternion::new(
            b * (tau * u3).cos(),
            a * (tau * u2).sin(),
            a * (tau * u2).cos(),
            b * (tau * u3).sin(),
        );
        Rotation(*UnitQuaternion::from_quaternion(q).to_rotation_matrix().matrix())
    }
}

pub fn random_rotation(seed: u64) -> Rotation {
    Rotation::sample(&mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn centroid(points: &[Point]) -> Point {
    let n = points.len().max(1) as f64;
    let mut c = [0.0; 3];
    for p in points {
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    c.map(|x| x / n)
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn rigid(points: &[Point], shift: &Point, r: &Rotation) -> Vec<Point> {
    points
        .iter()
        .map(|p| r.apply(&[p[0] - shift[0], p[1] - shift[1], p[2] - shift[2]]))
        .collect()
}

/// Moves pocket and ligand together: ligand centroid to the origin, then
/// one shared rotation drawn from `seed`.
pub fn augment_pair(p: &PocketRecord, l: &LigandRecord, seed: u64) -> (PocketRecord, LigandRecord) {
    augment_pair_with(p, l, &random_rotation(seed))
}

/// [`augment_pair`] with an explicit rotation.
pub fn augment_pair_with(p: &PocketRecord, l: &LigandRecord, r: &Rotation) -> (PocketRecord, LigandRecord) {
    let shift = centroid(l.conformer().rows());
    let pocket_rows = rigid(p.ca_coords().rows(), &shift, r);
    let ligand_rows = rigid(l.conformer().rows(), &shift, r);
    let pocket = PocketRecord::new(p.residues().to_vec(), Conformer(pocket_rows)).expect("row count unchanged");
    let ligand = LigandRecord::from_parts(l.smiles().to_string(), l.graph().clone(), Conformer(ligand_rows))
        .expect("row count unchanged");
    (pocket, ligand)
}

/// Rotation minimizing the RMSD of `r·(a - ā)` against `b - b̄`, with the
/// determinant fixed to +1.
pub fn kabsch_rotation(a: &[Point], b: &[Point]) -> Result<Rotation, GeometryError> {
    if a.len() != b.len() {
        return Err(GeometryError::SizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(GeometryError::Empty);
    }
    let (ca, cb) = (vec3(&centroid(a)), vec3(&centroid(b)));
    let mut h = Matrix3::zeros();
    for (p, q) in a.iter().zip(b) {
        h += (vec3(p) - ca) * (vec3(q) - cb).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let d = (v_t.transpose() * u.transpose()).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    Ok(Rotation(v_t.transpose() * fix * u.transpose()))
}

/// RMSD after optimal rigid superposition (no reflection).
pub fn kabsch_rmsd(a: &[Point], b: &[Point]) -> Result<f64, GeometryError> {
    let r = kabsch_rotation(a, b)?;
    let (ca, cb) = (centroid(a), centroid(b));
    let aligned = rigid(a, &ca, &r);
    let centered_b = rigid(b, &cb, &Rotation::identity());
    Ok(rmsd_unaligned(&aligned, &centered_b))
}

/// Plain RMSD without superposition. Panics on unequal lengths.
pub fn rmsd_unaligned(a: &[Point], b: &[Point]) -> f64 {
    assert_eq!(a.len(), b.len());
    let sum: f64 = a.iter().zip(b).map(|(p, q)| distance(p, q).powi(2)).sum();
    (sum / a.len().max(1) as f64).sqrt()
}

/// Angle at `b` in `[0, π]`; `None` when an arm has zero length.
pub fn bond_angle(a: &Point, b: &Point, c: &Point) -> Option<f64> {
    let u = vec3(a) - vec3(b);
    let v = vec3(c) - vec3(b);
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return None;
    }
    Some((u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0).acos())
}

/// Signed torsion a-b-c-d in `(-π, π]`, positive for clockwise rotation
/// of the front bond seen along b→c. `None` for collinear triples.
pub fn dihedral(a: &Point, b: &Point, c: &Point, d: &Point) -> Option<f64> {
    let b1 = vec3(b) - vec3(a);
    let b2 = vec3(c) - vec3(b);
    let b3 = vec3(d) - vec3(c);
    let n1 = b1.cross(&b2);
    let n2 = b2.cross(&b3);
    let scale = b2.norm();
    if n1.norm() < 1e-12 || n2.norm() < 1e-12 || scale == 0.0 {
        return None;
    }
    let y = scale * b1.dot(&n2);
    let x = n1.dot(&n2);
    let phi = y.atan2(x);
    Some(if phi <= -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        phi
    })
}

/// Internal coordinates in graph order. Angles and dihedrals that are
/// undefined for the given geometry are `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InternalCoordinates {
    /// One per bond, in bond order.
    pub bond_lengths: Vec<f64>,
    /// One per bonded triple a-b-c with a < c.
    pub bond_angles: Vec<Option<f64>>,
    /// One per bonded quadruple a-b-c-d, enumerated per bond b-c.
    pub dihedrals: Vec<Option<f64>>,
}

impl InternalCoordinates {
    /// Count of items whose geometry is degenerate: zero-length bonds and
    /// undefined angles or dihedrals.
    pub fn degenerate_count(&self) -> usize {
        self.bond_lengths.iter().filter(|&&l| l == 0.0).count()
            + self.bond_angles.iter().filter(|a| a.is_none()).count()
            + self.dihedrals.iter().filter(|d| d.is_none()).count()
    }
}

/// Bonded angle triples `(a, b, c)`: `b` central, `a < c`.
pub fn angle_triples(g: &MolecularGraph) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for b in 0..g.atom_count() {
        let nbrs: Vec<usize> = g.neighbors(b).iter().map(|&(n, _)| n).collect();
        for (i, &a) in nbrs.iter().enumerate() {
            for &c in &nbrs[i + 1..] {
                out.push([a.min(c), b, a.max(c)]);
            }
        }
    }
    out
}

/// Torsion quadruples `(a, b, c, d)` over every bond b-c, skipping 3-ring
/// closures where `a == d`.
pub fn dihedral_quads(g: &MolecularGraph) -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for bond in g.bonds() {
        let (b, c) = (bond.a, bond.b);
        for &(a, _) in g.neighbors(b) {
            if a == c {
                continue;
            }
            for &(d, _) in g.neighbors(c) {
                if d == b || d == a {
                    continue;
                }
                out.push([a, b, c, d]);
            }
        }
    }
    out
}

pub fn internal_coordinates(g: &MolecularGraph, coords: &[Point]) -> Result<InternalCoordinates, GeometryError> {
    if coords.len() != g.atom_count() {
        return Err(GeometryError::SizeMismatch {
            left: g.atom_count(),
            right: coords.len(),
        });
    }
    let bond_lengths = g.bonds().iter().map(|b| distance(&coords[b.a], &coords[b.b])).collect();
    let bond_angles = angle_triples(g)
        .into_iter()
        .map(|[a, b, c]| bond_angle(&coords[a], &coords[b], &coords[c]))
        .collect();
    let dihedrals = dihedral_quads(g)
        .into_iter()
        .map(|[a, b, c, d]| dihedral(&coords[a], &coords[b], &coords[c], &coords[d]))
        .collect();
    Ok(InternalCoordinates {
        bond_lengths,
        bond_angles,
        dihedrals,
    })
}

/// Fraction of RMSD values strictly below each threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageCurve {
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
}

impl CoverageCurve {
    /// `thresholds` are sorted ascending before evaluation.
    pub fn new(rmsds: &[f64], thresholds: &[f64]) -> CoverageCurve {
        let mut thresholds = thresholds.to_vec();
        thresholds.sort_by(f64::total_cmp);
        let n = rmsds.len();
        let fractions = thresholds
            .iter()
            .map(|&x| {
                if n == 0 {
                    0.0
                } else {
                    rmsds.iter().filter(|&&r| r < x).count() as f64 / n as f64
                }
            })
            .collect();
        CoverageCurve { thresholds, fractions }
    }

    pub fn fraction_below(&self, x: f64) -> Option<f64> {
        self.thresholds.iter().position(|&t| t == x).map(|i| self.fractions[i])
    }
}
