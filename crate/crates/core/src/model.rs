//! Plant, candidate sensors, sampling distributions and the information
//! matrices that turn sensors into PSD contributions.
//!
//! Every type here is immutable after construction; constructors enforce
//! the invariants and store symmetric matrices exactly symmetrized.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, symmetrize};
use crate::rng::{domain, substream};
use crate::scalar::Scalar;

/// LTI plant `x_{t+1} = A x_t + w_t`, `w_t ~ N(0, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel<T: Scalar = f64> {
    a: DMatrix<T>,
    q: DMatrix<T>,
}

impl<T: Scalar> SystemModel<T> {
    pub fn new(a: DMatrix<T>, q: DMatrix<T>) -> Result<Self> {
        let m = a.nrows();
        if m == 0 {
            return Err(Error::Invalid("state dimension m must be at least 1".into()));
        }
        if !a.is_square() {
            return Err(Error::Invalid(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if q.nrows() != m || q.ncols() != m {
            return Err(Error::DimensionMismatch {
                what: "order of Q",
                expected: m,
                got: q.nrows(),
            });
        }
        if a.iter().chain(q.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Invalid("A and Q must have finite entries".into()));
        }
        let asym = (&q - q.transpose()).norm();
        if asym > T::of(1e-12) * q.norm() {
            return Err(Error::Invalid(format!(
                "Q must be symmetric (relative asymmetry {:e} exceeds 1e-12)",
                (asym / q.norm()).as_f64()
            )));
        }
        let q = symmetrize(&q);
        if min_eigenvalue(&q) <= T::zero() {
            return Err(Error::Invalid("Q must be positive definite".into()));
        }
        Ok(Self { a, q })
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn q(&self) -> &DMatrix<T> {
        &self.q
    }

    /// State dimension `m`.
    pub fn order(&self) -> usize {
        self.a.nrows()
    }
}

/// One scalar-output sensor `(c, σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSensor<T: Scalar = f64> {
    c: DVector<T>,
    sigma2: T,
}

impl<T: Scalar> CandidateSensor<T> {
    pub fn new(c: DVector<T>, sigma2: T) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::Invalid("sensor output vector c must be non-empty".into()));
        }
        if !(sigma2 > T::zero()) || !sigma2.is_finite() {
            return Err(Error::Invalid(format!(
                "sensor variance sigma2 must be positive and finite, got {sigma2}"
            )));
        }
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("sensor output vector c must be finite".into()));
        }
        Ok(Self { c, sigma2 })
    }

    pub fn c(&self) -> &DVector<T> {
        &self.c
    }

    pub fn sigma2(&self) -> T {
        self.sigma2
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }
}

/// `𝒵 = σ⁻² c cᵀ`, rank at most one and exactly symmetric.
pub fn sensor_information_matrix<T: Scalar>(sensor: &CandidateSensor<T>) -> DMatrix<T> {
    symmetrize(&(&sensor.c * sensor.c.transpose() / sensor.sigma2))
}

/// Ordered pool of candidate sensors with their information matrices cached.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorPool<T: Scalar = f64> {
    sensors: Vec<CandidateSensor<T>>,
    information: Vec<DMatrix<T>>,
}

impl<T: Scalar> SensorPool<T> {
    pub fn new(sensors: Vec<CandidateSensor<T>>) -> Result<Self> {
        let first = sensors
            .first()
            .ok_or_else(|| Error::Invalid("sensor pool must contain at least one sensor (n_c >= 1)".into()))?;
        let m = first.dim();
        if let Some((j, s)) = sensors.iter().enumerate().find(|(_, s)| s.dim() != m) {
            return Err(Error::Invalid(format!(
                "all sensors must share the state dimension: sensor {j} has {} entries, expected {m}",
                s.dim()
            )));
        }
        let information = sensors.iter().map(sensor_information_matrix).collect();
        Ok(Self { sensors, information })
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    /// State dimension shared by all sensors.
    pub fn dim(&self) -> usize {
        self.sensors[0].dim()
    }

    pub fn sensors(&self) -> &[CandidateSensor<T>] {
        &self.sensors
    }

    /// Cached `𝒵_j` for every sensor, in pool order.
    pub fn information(&self) -> &[DMatrix<T>] {
        &self.information
    }

    /// Output matrix whose rows are all `c_jᵀ`.
    pub fn output_matrix(&self) -> DMatrix<T> {
        DMatrix::from_fn(self.len(), self.dim(), |i, k| self.sensors[i].c[k])
    }

    pub fn check_model(&self, model: &SystemModel<T>) -> Result<()> {
        if self.dim() != model.order() {
            return Err(Error::DimensionMismatch {
                what: "sensor dimension vs model order",
                expected: model.order(),
                got: self.dim(),
            });
        }
        Ok(())
    }
}

/// Probability vector over the pool (a point of the simplex).
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDistribution<T: Scalar = f64> {
    weights: DVector<T>,
}

impl<T: Scalar> SamplingDistribution<T> {
    pub fn new(weights: DVector<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Invalid("sampling distribution must have at least one weight".into()));
        }
        if let Some((j, w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= T::zero()) || !w.is_finite()) {
            return Err(Error::Invalid(format!(
                "sampling weights must be non-negative: weight {j} is {w}"
            )));
        }
        let sum = weights.sum();
        let tol = T::of(1e-12).max(T::of(4.0 * weights.len() as f64) * T::machine_eps());
        if (sum - T::one()).abs() > tol {
            return Err(Error::Invalid(format!(
                "sampling weights must sum to 1 (sum is {sum})"
            )));
        }
        Ok(Self { weights })
    }

    /// Clips negative entries to zero and rescales onto the simplex.
    pub fn normalized(raw: DVector<T>) -> Result<Self> {
        let clipped = raw.map(|w| w.max(T::zero()));
        let sum = clipped.sum();
        if !(sum > T::zero()) {
            return Err(Error::Invalid("cannot normalize an all-zero weight vector".into()));
        }
        Self::new(clipped / sum)
    }

    pub fn weights(&self) -> &DVector<T> {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Number of entries strictly above `threshold`.
    pub fn support_size(&self, threshold: T) -> usize {
        self.weights.iter().filter(|&&w| w > threshold).count()
    }
}

/// Multiset of sampled sensor indices (0-based, duplicates allowed).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Selection {
    indices: Vec<usize>,
}

impl Selection {
    pub fn new(indices: Vec<usize>, pool_size: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Invalid("a selection needs n_s >= 1 indices".into()));
        }
        if let Some(&index) = indices.iter().find(|&&i| i >= pool_size) {
            return Err(Error::IndexOutOfRange { index, pool_size });
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// `E[Z] = Σ_j p_j 𝒵_j`.
pub fn expected_information<T: Scalar>(pool: &SensorPool<T>, p: &SamplingDistribution<T>) -> Result<DMatrix<T>> {
    if pool.len() != p.len() {
        return Err(Error::DimensionMismatch {
            what: "sampling distribution length vs pool size",
            expected: pool.len(),
            got: p.len(),
        });
    }
    let m = pool.dim();
    let mut acc = DMatrix::zeros(m, m);
    for (z, &w) in pool.information().iter().zip(p.weights().iter()) {
        if w != T::zero() {
            acc += z * w;
        }
    }
    Ok(symmetrize(&acc))
}

/// `C_𝒮ᵀ R_𝒮⁻¹ C_𝒮 = Σ_{j∈𝒮} 𝒵_j`, counting multiplicity.
pub fn selection_information<T: Scalar>(pool: &SensorPool<T>, sel: &Selection) -> Result<DMatrix<T>> {
    let m = pool.dim();
    let mut acc = DMatrix::zeros(m, m);
    for &i in sel.indices() {
        let z = pool
            .information()
            .get(i)
            .ok_or(Error::IndexOutOfRange { index: i, pool_size: pool.len() })?;
        acc += z;
    }
    Ok(acc)
}

/// Random plant and pool: entries of `A` and every `c_j` i.i.d. uniform on
/// `[0, 1)`, `Q = q_scale·I`, and a common `sigma2`. Deterministic in `seed`.
pub fn generate_synthetic_pool<T: Scalar>(
    m: usize,
    n_c: usize,
    sigma2: f64,
    q_scale: f64,
    seed: u64,
) -> Result<(SystemModel<T>, SensorPool<T>)> {
    if m == 0 {
        return Err(Error::Invalid("state dimension m must be at least 1".into()));
    }
    if n_c == 0 {
        return Err(Error::Invalid("pool size n_c must be at least 1".into()));
    }
    if !(q_scale > 0.0) || !q_scale.is_finite() {
        return Err(Error::Invalid(format!("q_scale must be positive, got {q_scale}")));
    }
    let mut rng = substream(seed, domain::SYNTHETIC_POOL, 0);
    let a = DMatrix::from_row_iterator(m, m, (0..m * m).map(|_| T::of(rng.random::<f64>())));
    let q = DMatrix::from_diagonal_element(m, m, T::of(q_scale));
    let model = SystemModel::new(a, q)?;
    let sensors = (0..n_c)
        .map(|_| {
            let c = DVector::from_iterator(m, (0..m).map(|_| T::of(rng.random::<f64>())));
            CandidateSensor::new(c, T::of(sigma2))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((model, SensorPool::new(sensors)?))
}

/// On-disk interchange format for a plant and its pool; matrices row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolDocument {
    pub m: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub sensors: Vec<SensorDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorDocument {
    pub c: Vec<f64>,
    pub sigma2: f64,
}

pub fn matrix_to_rows<T: Scalar>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().map(|x| x.as_f64()).collect()).collect()
}

fn rows_to_matrix<T: Scalar>(name: &str, rows: &[Vec<f64>], m: usize) -> Result<DMatrix<T>> {
    if rows.len() != m {
        return Err(Error::Invalid(format!("{name} must have m = {m} rows, found {}", rows.len())));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
        return Err(Error::Invalid(format!(
            "{name} must be square of order m = {m}: row {i} has {} entries",
            r.len()
        )));
    }
    Ok(DMatrix::from_row_iterator(m, m, rows.iter().flatten().map(|&x| T::of(x))))
}

impl PoolDocument {
    pub fn from_parts<T: Scalar>(model: &SystemModel<T>, pool: &SensorPool<T>) -> Self {
        Self {
            m: model.order(),
            a: matrix_to_rows(model.a()),
            q: matrix_to_rows(model.q()),
            sensors: pool
                .sensors()
                .iter()
                .map(|s| SensorDocument {
                    c: s.c().iter().map(|x| x.as_f64()).collect(),
                    sigma2: s.sigma2().as_f64(),
                })
                .collect(),
        }
    }

    /// Validates every invariant and builds the typed model and pool.
    pub fn into_parts<T: Scalar>(&self) -> Result<(SystemModel<T>, SensorPool<T>)> {
        let m = self.m;
        if m == 0 {
            return Err(Error::Invalid("state dimension m must be at least 1".into()));
        }
        let a = rows_to_matrix("A", &self.a, m)?;
        let q = rows_to_matrix("Q", &self.q, m)?;
        let model = SystemModel::new(a, q)?;
        if self.sensors.is_empty() {
            return Err(Error::Invalid("sensor pool must contain at least one sensor (n_c >= 1)".into()));
        }
        let sensors = self
            .sensors
            .iter()
            .enumerate()
            .map(|(j, s)| {
                if s.c.len() != m {
                    return Err(Error::Invalid(format!(
                        "sensor {j}: c must have m = {m} entries, found {}",
                        s.c.len()
                    )));
                }
                CandidateSensor::new(DVector::from_iterator(m, s.c.iter().map(|&x| T::of(x))), T::of(s.sigma2))
                    .map_err(|e| Error::Invalid(format!("sensor {j}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((model, SensorPool::new(sensors)?))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Reads and validates a pool/system JSON file.
pub fn load_pool<T: Scalar>(path: &Path) -> Result<(SystemModel<T>, SensorPool<T>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    PoolDocument::from_json(&text)?.into_parts()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sensor(c: &[f64], s2: f64) -> CandidateSensor {
        CandidateSensor::new(DVector::from_row_slice(c), s2).unwrap()
    }

    fn basis_pool() -> SensorPool {
        SensorPool::new(vec![sensor(&[1.0, 0.0], 1.0), sensor(&[0.0, 1.0], 1.0)]).unwrap()
    }

    #[test]
    fn information_matrix_examples() {
        let z = sensor_information_matrix(&sensor(&[1.0, 0.0], 0.5));
        assert_eq!(z, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
        let z = sensor_information_matrix(&sensor(&[0.0, 0.0], 1.0));
        assert_eq!(z, DMatrix::zeros(2, 2));
        let z = sensor_information_matrix(&sensor(&[1.0, 1.0], 2.0));
        assert_relative_eq!(z, DMatrix::from_element(2, 2, 0.5), epsilon = 1e-15);
    }

    #[test]
    fn information_matrix_in_single_precision() {
        let s = CandidateSensor::<f32>::new(DVector::from_row_slice(&[1.0, 1.0]), 2.0).unwrap();
        let z = sensor_information_matrix(&s);
        assert_relative_eq!(z, DMatrix::from_element(2, 2, 0.5f32), epsilon = 1e-6);
    }

    #[test]
    fn expected_information_examples() {
        let single = SensorPool::new(vec![sensor(&[1.0, 2.0], 0.5)]).unwrap();
        let one = SamplingDistribution::new(DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(expected_information(&single, &one).unwrap(), single.information()[0]);

        let twin = SensorPool::new(vec![sensor(&[1.0, 2.0], 0.5), sensor(&[1.0, 2.0], 0.5)]).unwrap();
        let half = SamplingDistribution::new(DVector::from_element(2, 0.5)).unwrap();
        assert_relative_eq!(expected_information(&twin, &half).unwrap(), twin.information()[0], epsilon = 1e-14);

        let p = SamplingDistribution::new(DVector::from_row_slice(&[0.25, 0.75])).unwrap();
        let e = expected_information(&basis_pool(), &p).unwrap();
        assert_relative_eq!(e, DMatrix::from_diagonal(&DVector::from_row_slice(&[0.25, 0.75])));

        assert!(matches!(
            expected_information(&basis_pool(), &one),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn selection_information_examples() {
        let pool = basis_pool();
        let twice = Selection::new(vec![0, 0], 2).unwrap();
        assert_eq!(selection_information(&pool, &twice).unwrap(), &pool.information()[0] * 2.0);
        let single = Selection::new(vec![1], 2).unwrap();
        assert_eq!(selection_information(&pool, &single).unwrap(), pool.information()[1]);
        let sel = Selection::new(vec![0, 1, 1], 2).unwrap();
        assert_eq!(
            selection_information(&pool, &sel).unwrap(),
            DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 2.0]))
        );
        assert!(matches!(
            Selection::new(vec![0, 2], 2),
            Err(Error::IndexOutOfRange { index: 2, pool_size: 2 })
        ));
        assert!(Selection::new(vec![], 2).is_err());
    }

    #[test]
    fn expectation_matches_single_draw_enumeration() {
        let pool = SensorPool::new(vec![
            sensor(&[1.0, 0.3, -0.2], 0.5),
            sensor(&[0.1, 1.0, 0.4], 2.0),
            sensor(&[0.7, -0.5, 1.0], 1.0),
        ])
        .unwrap();
        let p = SamplingDistribution::new(DVector::from_row_slice(&[0.2, 0.5, 0.3])).unwrap();
        let mut enumerated = DMatrix::zeros(3, 3);
        for j in 0..3 {
            let sel = Selection::new(vec![j], 3).unwrap();
            enumerated += selection_information(&pool, &sel).unwrap() * p.weights()[j];
        }
        assert_relative_eq!(expected_information(&pool, &p).unwrap(), enumerated, epsilon = 1e-14);
    }

    #[test]
    fn invariants_are_enforced() {
        let a = DMatrix::identity(2, 2);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(SystemModel::new(a.clone(), asym).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(SystemModel::new(a.clone(), indefinite).is_err());
        assert!(SystemModel::new(a.clone(), DMatrix::identity(3, 3)).is_err());
        assert!(CandidateSensor::new(DVector::from_row_slice(&[1.0]), 0.0).is_err());
        assert!(SensorPool::<f64>::new(vec![]).is_err());
        assert!(SensorPool::new(vec![sensor(&[1.0], 1.0), sensor(&[1.0, 2.0], 1.0)]).is_err());
        assert!(SamplingDistribution::new(DVector::from_row_slice(&[0.5, 0.6])).is_err());
        assert!(SamplingDistribution::new(DVector::from_row_slice(&[-0.1, 1.1])).is_err());
    }

    #[test]
    fn synthetic_pool_is_deterministic() {
        let (m1, p1) = generate_synthetic_pool::<f64>(3, 200, 0.5, 0.5, 11).unwrap();
        let (m2, p2) = generate_synthetic_pool::<f64>(3, 200, 0.5, 0.5, 11).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(p1, p2);
        assert_eq!(p1.len(), 200);
        assert_eq!(m1.order(), 3);
        assert_eq!(m1.q(), &DMatrix::from_diagonal_element(3, 3, 0.5));
        assert!(p1.sensors().iter().all(|s| s.sigma2() == 0.5));
        assert!(m1.a().iter().chain(p1.output_matrix().iter()).all(|&x| (0.0..1.0).contains(&x)));

        let (m3, _) = generate_synthetic_pool::<f64>(3, 200, 0.5, 0.5, 12).unwrap();
        assert_ne!(m1, m3);

        let (scalar, single) = generate_synthetic_pool::<f64>(1, 1, 1.0, 1.0, 0).unwrap();
        assert_eq!((scalar.order(), single.len()), (1, 1));
        assert!(generate_synthetic_pool::<f64>(0, 3, 0.5, 0.5, 0).is_err());
    }

    #[test]
    fn document_round_trip_and_diagnostics() {
        let (model, pool) = generate_synthetic_pool::<f64>(2, 4, 0.5, 0.5, 3).unwrap();
        let doc = PoolDocument::from_parts(&model, &pool);
        let text = doc.to_json().unwrap();
        let (m2, p2) = PoolDocument::from_json(&text).unwrap().into_parts::<f64>().unwrap();
        assert_eq!(model, m2);
        assert_eq!(pool, p2);

        let mut bad = doc.clone();
        bad.sensors[1].sigma2 = -1.0;
        let err = bad.into_parts::<f64>().unwrap_err().to_string();
        assert!(err.contains("sensor 1") && err.contains("sigma2"), "{err}");

        let mut bad = doc.clone();
        bad.q[0][1] = 0.3;
        assert!(bad.into_parts::<f64>().unwrap_err().to_string().contains("symmetric"));

        let mut bad = doc;
        bad.m = 0;
        assert!(bad.into_parts::<f64>().unwrap_err().to_string().contains("m must be"));
        assert!(PoolDocument::from_json("{\"m\": 2}").is_err());
    }
}
