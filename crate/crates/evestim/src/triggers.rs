//! Innovation-based transmission triggers.
//!
//! A sensor holding measurement y_k computes the innovation z_k = y_k − c_k
//! against an implicit measurement c_k that the receiver can reproduce, then
//! transmits with probability 1 − φ(z_k). The weighting φ is a generalized
//! Gaussian whose exponent β interpolates from a fully stochastic trigger
//! (β = 2) toward a deterministic ellipsoid test (β → ∞), which is also
//! available exactly as a separate mode.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{GaussianBelief, LinearSystemModel};

// ============================================================================
// Weighting function
// ============================================================================

/// The trigger weighting φ: innovation ↦ no-transmission probability.
///
/// Stochastic mode evaluates exp(−½ (zᵀZ⁻¹z)^{β/2}); deterministic mode is
/// the indicator of the ellipsoid zᵀZ⁻¹z ≤ 1. The deterministic trigger is a
/// mode flag rather than a huge β so the indicator is exact.
#[derive(Debug, Clone)]
pub struct WeightingSpec {
    beta: f64,
    deterministic: bool,
    z: DMatrix<f64>,
    // Lower Cholesky factor of Z; zᵀZ⁻¹z is evaluated by triangular solve,
    // never by forming Z⁻¹.
    chol_l: DMatrix<f64>,
}

impl WeightingSpec {
    /// Stochastic weighting with shape exponent `beta` and PD shape matrix
    /// `z`. Exponents below 2 are legal but produce heavy-tailed triggers,
    /// so the builder logs a warning.
    pub fn stochastic(beta: f64, z: DMatrix<f64>) -> Result<Self> {
        if !beta.is_finite() || beta <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "weighting exponent must be finite and > 0, got {beta}"
            )));
        }
        if beta < 2.0 {
            log::warn!("weighting exponent beta={beta} < 2 has heavy tails; event rates may behave poorly");
        }
        Self::build(beta, false, z)
    }

    /// Deterministic ellipsoid trigger: transmit exactly when zᵀZ⁻¹z > 1.
    pub fn deterministic(z: DMatrix<f64>) -> Result<Self> {
        Self::build(f64::INFINITY, true, z)
    }

    /// Stochastic weighting with Z = alpha_z·I.
    pub fn isotropic(beta: f64, alpha_z: f64, ny: usize) -> Result<Self> {
        Self::stochastic(beta, Self::scaled_identity(alpha_z, ny)?)
    }

    /// Deterministic trigger with Z = alpha_z·I.
    pub fn deterministic_isotropic(alpha_z: f64, ny: usize) -> Result<Self> {
        Self::deterministic(Self::scaled_identity(alpha_z, ny)?)
    }

    fn scaled_identity(alpha_z: f64, ny: usize) -> Result<DMatrix<f64>> {
        if !alpha_z.is_finite() || alpha_z <= 0.0 || ny == 0 {
            return Err(Error::InvalidArgument(format!(
                "scaled-identity shape requires alpha_z > 0 and ny >= 1, got alpha_z={alpha_z}, ny={ny}"
            )));
        }
        Ok(DMatrix::identity(ny, ny) * alpha_z)
    }

    fn build(beta: f64, deterministic: bool, z: DMatrix<f64>) -> Result<Self> {
        if !linalg::is_symmetric(&z, 1e-10) {
            return Err(Error::NotCovariance { what: "trigger shape matrix Z" });
        }
        let chol = z
            .clone()
            .cholesky()
            .ok_or(Error::NotCovariance { what: "trigger shape matrix Z" })?;
        Ok(WeightingSpec { beta, deterministic, z, chol_l: chol.unpack() })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    pub fn shape_matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn dim(&self) -> usize {
        self.z.nrows()
    }

    /// zᵀZ⁻¹z via the Cholesky factor: ‖L⁻¹z‖².
    pub fn quadform(&self, z: &DVector<f64>) -> f64 {
        assert_eq!(z.len(), self.dim(), "innovation dimension mismatch");
        let u = self
            .chol_l
            .solve_lower_triangular(z)
            .expect("Cholesky factor has a positive diagonal");
        u.norm_squared()
    }

    /// No-transmission probability for innovation `z`.
    pub fn phi(&self, z: &DVector<f64>) -> f64 {
        self.phi_of_quadform(self.quadform(z))
    }

    /// φ as a function of the quadratic form q = zᵀZ⁻¹z.
    pub(crate) fn phi_of_quadform(&self, q: f64) -> f64 {
        // Rounding can leave a tiny negative q for z ≈ 0; clamp before powf
        // so the result stays in [0, 1] instead of going NaN.
        let q = q.max(0.0);
        if self.deterministic {
            return if q <= 1.0 { 1.0 } else { 0.0 };
        }
        // q^{β/2} = exp((β/2)·ln q); IEEE powf clamps underflow to 0 and
        // overflow to +inf, which the outer exp maps back into [0, 1].
        (-0.5 * q.powf(0.5 * self.beta)).exp()
    }

    /// Quadratic forms of every column of `zs` in one triangular solve.
    pub(crate) fn quadforms_of_columns(&self, zs: &DMatrix<f64>) -> Vec<f64> {
        assert_eq!(zs.nrows(), self.dim(), "innovation dimension mismatch");
        let u = self
            .chol_l
            .solve_lower_triangular(zs)
            .expect("Cholesky factor has a positive diagonal");
        (0..u.ncols()).map(|i| u.column(i).norm_squared()).collect()
    }

    /// Probability of transmitting measurement `y` given implicit
    /// measurement `c`: 1 − φ(y − c).
    pub fn transmission_probability(&self, y: &DVector<f64>, c: &DVector<f64>) -> f64 {
        1.0 - self.phi(&(y - c))
    }
}

// ============================================================================
// Implicit-measurement policies
// ============================================================================

/// Policy selector, convenient for configuration and CSV columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    /// c = 0; silence means "the measurement is small".
    Zero,
    /// Send-on-delta: c is the last transmitted measurement.
    Sod,
    /// Send-on-delta with prediction: c = H·F^l·x̂ˢ_{k_e}, the propagated
    /// local estimate transmitted at the last event.
    Sodp,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Zero => "zero",
            PolicyKind::Sod => "sod",
            PolicyKind::Sodp => "sodp",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(PolicyKind::Zero),
            "sod" => Ok(PolicyKind::Sod),
            "sodp" => Ok(PolicyKind::Sodp),
            other => Err(Error::InvalidArgument(format!(
                "unknown policy '{other}' (expected zero, sod, or sodp)"
            ))),
        }
    }
}

/// The implicit-measurement rule together with its anchor data.
#[derive(Debug, Clone)]
pub enum ImplicitPolicy {
    Zero,
    Sod {
        /// y_{k_e}; initialized to H·x̂₀ as a pseudo-transmission at k = 0.
        last_measurement: DVector<f64>,
    },
    Sodp {
        /// x̂ˢ_{k_e}: the sensor's local posterior transmitted at the last
        /// event (the initial belief before any event).
        anchor: GaussianBelief,
    },
}

// ============================================================================
// Trigger state machine
// ============================================================================

/// Per-sensor trigger state: the policy anchor, the current implicit
/// measurement, and the event clock. The receiver holds an identical replica
/// advanced only by transmitted payloads, which is what makes c_k common
/// knowledge.
#[derive(Debug, Clone)]
pub struct TriggerState {
    policy: ImplicitPolicy,
    /// Index of the last event (0 counts the initial pseudo-event).
    last_event: usize,
    /// Steps since the last event; 0 exactly at event/init steps.
    steps_since_event: usize,
    /// Implicit measurement for the current step.
    c: DVector<f64>,
}

/// Outcome of one trigger evaluation.
#[derive(Debug, Clone)]
pub struct TriggerDecision {
    /// True when the measurement is transmitted.
    pub gamma: bool,
    /// Transmitted content; present iff `gamma`.
    pub payload: Option<Payload>,
    /// The uniform draw, recorded so decisions can be replayed in tests.
    pub xi: f64,
    /// The innovation y − c the decision was based on.
    pub z: DVector<f64>,
}

/// What crosses the channel at an event.
#[derive(Debug, Clone)]
pub struct Payload {
    pub measurement: DVector<f64>,
    /// Sensor posterior x̂ˢ_k; filled by the caller for SODP, where the
    /// receiver needs it to evaluate the propagation rule.
    pub local_estimate: Option<GaussianBelief>,
}

impl TriggerState {
    /// Builds the state at k = 0, treating the shared initial belief as a
    /// pseudo-event: SOD anchors on H·x̂₀ and SODP on the belief itself, so
    /// sensor and receiver start in agreement without a real transmission.
    pub fn new(
        kind: PolicyKind,
        model: &LinearSystemModel,
        initial: &GaussianBelief,
    ) -> Result<Self> {
        if initial.dim() != model.nx() {
            return Err(Error::InvalidArgument(format!(
                "initial belief has dimension {}, model expects {}",
                initial.dim(),
                model.nx()
            )));
        }
        let (policy, c) = match kind {
            PolicyKind::Zero => (ImplicitPolicy::Zero, DVector::zeros(model.ny())),
            PolicyKind::Sod => {
                let pseudo = model.h() * &initial.mean;
                (ImplicitPolicy::Sod { last_measurement: pseudo.clone() }, pseudo)
            }
            PolicyKind::Sodp => (
                ImplicitPolicy::Sodp { anchor: initial.clone() },
                model.h() * &initial.mean,
            ),
        };
        Ok(TriggerState { policy, last_event: 0, steps_since_event: 0, c })
    }

    pub fn kind(&self) -> PolicyKind {
        match self.policy {
            ImplicitPolicy::Zero => PolicyKind::Zero,
            ImplicitPolicy::Sod { .. } => PolicyKind::Sod,
            ImplicitPolicy::Sodp { .. } => PolicyKind::Sodp,
        }
    }

    /// Implicit measurement for the current step.
    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn steps_since_event(&self) -> usize {
        self.steps_since_event
    }

    pub fn last_event(&self) -> usize {
        self.last_event
    }

    /// Advances the event clock by one step and recomputes c from the policy
    /// anchor. Call exactly once per time step, before `decide`.
    pub fn propagate_implicit(&mut self, model: &LinearSystemModel) {
        self.steps_since_event += 1;
        self.c = self.implicit_measurement(model, self.steps_since_event);
    }

    /// The policy rule evaluated `steps_since_event` steps after the anchor:
    /// ZERO → 0, SOD → y_{k_e}, SODP → H·F^l·x̂ˢ_{k_e}.
    pub fn implicit_measurement(
        &self,
        model: &LinearSystemModel,
        steps_since_event: usize,
    ) -> DVector<f64> {
        match &self.policy {
            ImplicitPolicy::Zero => DVector::zeros(model.ny()),
            ImplicitPolicy::Sod { last_measurement } => last_measurement.clone(),
            ImplicitPolicy::Sodp { anchor } => {
                let mut x = anchor.mean.clone();
                for _ in 0..steps_since_event {
                    x = model.f() * x;
                }
                model.h() * x
            }
        }
    }

    /// Draws ξ ~ U(0,1] and transmits iff ξ > φ(y − c). Both trigger modes
    /// consume exactly one uniform per call, so stochastic and deterministic
    /// runs stay replay-compatible. The half-open draw from the high side
    /// makes the φ = 0 ⇒ γ = 1 and φ = 1 ⇒ γ = 0 branches exact.
    pub fn decide<R: Rng + ?Sized>(
        &self,
        y: &DVector<f64>,
        spec: &WeightingSpec,
        rng: &mut R,
    ) -> TriggerDecision {
        let xi = 1.0 - rng.random::<f64>();
        self.decide_with_uniform(y, xi, spec)
    }

    /// Decision core with an externally supplied uniform, for replay.
    pub fn decide_with_uniform(
        &self,
        y: &DVector<f64>,
        xi: f64,
        spec: &WeightingSpec,
    ) -> TriggerDecision {
        let z = y - &self.c;
        let gamma = xi > spec.phi(&z);
        let payload = gamma.then(|| Payload { measurement: y.clone(), local_estimate: None });
        TriggerDecision { gamma, payload, xi, z }
    }

    /// Records a transmission at the current step: resets the event clock,
    /// and re-anchors the policy (SOD stores y, SODP stores the sensor's
    /// local posterior, which must accompany the event).
    pub fn on_event(
        &mut self,
        y: &DVector<f64>,
        local_posterior: Option<&GaussianBelief>,
    ) -> Result<()> {
        self.last_event += self.steps_since_event;
        self.steps_since_event = 0;
        match &mut self.policy {
            ImplicitPolicy::Zero => {}
            ImplicitPolicy::Sod { last_measurement } => {
                *last_measurement = y.clone();
                self.c = y.clone();
            }
            ImplicitPolicy::Sodp { anchor } => {
                let posterior = local_posterior.ok_or_else(|| {
                    Error::InvalidArgument(
                        "an SODP event must carry the sensor's local posterior".into(),
                    )
                })?;
                *anchor = posterior.clone();
            }
        }
        Ok(())
    }
}

// ============================================================================
// Tests
// ============================================================================
