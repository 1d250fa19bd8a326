//! Gaussian plume forward model and its analytic sensor-coordinate gradients.
//!
//! For a source at `x` with stack height `H`, a sensor at `s`, and wind `β`
//! with unit direction `w` and speed `u`:
//!
//! ```text
//! r∥ = w·(s − x)          r⊥ = (s − x) − r∥ w
//! A  = 1/(2πK r∥) · exp(−u(|r⊥|² + H²) / (4K r∥))     for r∥ > ε_down
//! A  = 0                                              otherwise
//! ```
//!
//! The speed factor `u` in the exponent can be switched off to obtain the
//! variant without it; gradients always match the kernel actually evaluated.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Real;

/// Along-wind distance at or below which a sensor counts as upwind.
pub const UPWIND_EPS: f64 = 1e-6;

pub type Point<T> = [T; 2];

#[derive(Clone, Debug, PartialEq)]
pub struct SourceSpec<T> {
    pub location: Point<T>,
    pub stack_height: T,
}

impl<T: Real> SourceSpec<T> {
    pub fn new(location: Point<T>, stack_height: T) -> Result<Self> {
        if !(location[0].is_finite() && location[1].is_finite() && stack_height.is_finite()) {
            return Err(Error::NonFinite("source"));
        }
        if stack_height < T::zero() {
            return Err(Error::invalid("stack height must be non-negative"));
        }
        Ok(Self { location, stack_height })
    }
}

/// Wind vector `β` in m/s. Never zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindVector<T> {
    beta: Point<T>,
}

impl<T: Real> WindVector<T> {
    pub fn new(beta: Point<T>) -> Result<Self> {
        if !(beta[0].is_finite() && beta[1].is_finite()) {
            return Err(Error::NonFinite("wind"));
        }
        if beta[0] == T::zero() && beta[1] == T::zero() {
            return Err(Error::ZeroWind);
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> Point<T> {
        self.beta
    }

    pub fn speed(&self) -> T {
        self.beta[0].hypot(self.beta[1])
    }

    pub fn unit(&self) -> Point<T> {
        let u = self.speed();
        [self.beta[0] / u, self.beta[1] / u]
    }
}

/// Sensor coordinates `s = (s_1, …, s_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorLayout<T> {
    pub positions: Vec<Point<T>>,
}

impl<T: Real> SensorLayout<T> {
    pub fn new(positions: Vec<Point<T>>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("layout needs at least one sensor"));
        }
        if positions.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::NonFinite("sensor position"));
        }
        Ok(Self { positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Flattened coordinates `[x_1, y_1, x_2, y_2, …]`.
    pub fn coords(&self) -> Vec<T> {
        self.positions.iter().flat_map(|p| [p[0], p[1]]).collect()
    }

    pub fn from_coords(coords: &[T]) -> Result<Self> {
        if coords.len() % 2 != 0 {
            return Err(Error::Dimension(format!("{} layout coordinates", coords.len())));
        }
        Self::new(coords.chunks(2).map(|c| [c[0], c[1]]).collect())
    }

    pub fn with_coord(&self, k: usize, value: T) -> Self {
        let mut out = self.clone();
        out.positions[k / 2][k % 2] = value;
        out
    }
}

/// Kernel parameters shared by every source: eddy diffusivity and whether the
/// exponent carries the wind speed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlumeKernel<T> {
    pub diffusivity: T,
    pub wind_speed_factor: bool,
}

/// Per source-sensor-wind quantities reused by the kernel and its gradients.
#[derive(Clone, Copy, Debug)]
struct Geometry<T> {
    r_par: T,
    /// Components of `r⊥`.
    perp: Point<T>,
    w: Point<T>,
    /// Exponent `−u(|r⊥|² + H²)/(4K r∥)`.
    exponent: T,
    /// `u(|r⊥|² + H²)`
    numerator: T,
    speed: T,
}

impl<T: Real> PlumeKernel<T> {
    pub fn new(diffusivity: T) -> Result<Self> {
        if !(diffusivity > T::zero()) || !diffusivity.is_finite() {
            return Err(Error::invalid("diffusivity must be positive"));
        }
        Ok(Self { diffusivity, wind_speed_factor: true })
    }

    fn geometry(&self, source: &SourceSpec<T>, sensor: Point<T>, wind: &WindVector<T>) -> Result<Option<Geometry<T>>> {
        if !(sensor[0].is_finite() && sensor[1].is_finite()) {
            return Err(Error::NonFinite("sensor position"));
        }
        let w = wind.unit();
        let r = [sensor[0] - source.location[0], sensor[1] - source.location[1]];
        let r_par = w[0] * r[0] + w[1] * r[1];
        if r_par <= T::lit(UPWIND_EPS) {
            return Ok(None);
        }
        let perp = [r[0] - r_par * w[0], r[1] - r_par * w[1]];
        let speed = if self.wind_speed_factor { wind.speed() } else { T::one() };
        let h = source.stack_height;
        let numerator = speed * (perp[0] * perp[0] + perp[1] * perp[1] + h * h);
        let exponent = -numerator / (T::lit(4.0) * self.diffusivity * r_par);
        Ok(Some(Geometry { r_par, perp, w, exponent, numerator, speed }))
    }

    /// `A_j(s_i)`; exactly zero upwind.
    pub fn value(&self, source: &SourceSpec<T>, sensor: Point<T>, wind: &WindVector<T>) -> Result<T> {
        Ok(match self.geometry(source, sensor, wind)? {
            None => T::zero(),
            Some(g) => g.exponent.exp() / (T::lit(2.0) * T::PI() * self.diffusivity * g.r_par),
        })
    }

    /// Derivative of the exponent with respect to sensor coordinate `c`.
    fn exponent_derivative(&self, g: &Geometry<T>, c: usize) -> T {
        let (w1, w2) = (g.w[0], g.w[1]);
        let two = T::lit(2.0);
        // ∂|r⊥|²/∂s_c through the projector I − wwᵀ
        let dq = match c {
            0 => two * g.perp[0] * (T::one() - w1 * w1) + two * g.perp[1] * (-w1 * w2),
            _ => two * g.perp[0] * (-w1 * w2) + two * g.perp[1] * (T::one() - w2 * w2),
        };
        let four_k = T::lit(4.0) * self.diffusivity;
        let denom = four_k * g.r_par;
        (-g.speed * dq * denom - (-g.numerator * four_k * g.w[c])) / (denom * denom)
    }

    /// `(∂A/∂s_{i,1}, ∂A/∂s_{i,2})`; exactly zero upwind.
    pub fn gradient(&self, source: &SourceSpec<T>, sensor: Point<T>, wind: &WindVector<T>) -> Result<Point<T>> {
        let Some(g) = self.geometry(source, sensor, wind)? else {
            return Ok([T::zero(); 2]);
        };
        let two_pi_k = T::lit(2.0) * T::PI() * self.diffusivity;
        let e = g.exponent.exp();
        let prefactor = two_pi_k * g.r_par;
        let mut out = [T::zero(); 2];
        for (c, o) in out.iter_mut().enumerate() {
            *o = -two_pi_k * g.w[c] / (prefactor * prefactor) * e
                + e / prefactor * self.exponent_derivative(&g, c);
        }
        Ok(out)
    }

    /// Gradient of `A_m A_n` with respect to the sensor, written directly on
    /// the product form rather than through the product rule.
    pub fn product_gradient(
        &self,
        source_m: &SourceSpec<T>,
        source_n: &SourceSpec<T>,
        sensor: Point<T>,
        wind: &WindVector<T>,
    ) -> Result<Point<T>> {
        let gm = self.geometry(source_m, sensor, wind)?;
        let gn = self.geometry(source_n, sensor, wind)?;
        let (Some(gm), Some(gn)) = (gm, gn) else {
            return Ok([T::zero(); 2]);
        };
        let k2 = T::lit(4.0) * T::PI() * T::PI() * self.diffusivity * self.diffusivity;
        let denom = k2 * gm.r_par * gn.r_par;
        let e = (gm.exponent + gn.exponent).exp();
        let mut out = [T::zero(); 2];
        for (c, o) in out.iter_mut().enumerate() {
            *o = -k2 * gm.w[c] * (gm.r_par + gn.r_par) / (denom * denom) * e
                + e / denom * (self.exponent_derivative(&gm, c) + self.exponent_derivative(&gn, c));
        }
        Ok(out)
    }
}

/// Convenience wrapper for the kernel with the speed factor in the exponent.
pub fn plume_kernel<T: Real>(source: &SourceSpec<T>, sensor: Point<T>, wind: &WindVector<T>, diffusivity: T) -> Result<T> {
    PlumeKernel::new(diffusivity)?.value(source, sensor, wind)
}

pub fn kernel_gradients<T: Real>(
    source: &SourceSpec<T>,
    sensor: Point<T>,
    wind: &WindVector<T>,
    diffusivity: T,
) -> Result<Point<T>> {
    PlumeKernel::new(diffusivity)?.gradient(source, sensor, wind)
}

pub fn product_kernel_gradients<T: Real>(
    source_m: &SourceSpec<T>,
    source_n: &SourceSpec<T>,
    sensor: Point<T>,
    wind: &WindVector<T>,
    diffusivity: T,
) -> Result<Point<T>> {
    PlumeKernel::new(diffusivity)?.product_gradient(source_m, source_n, sensor, wind)
}

/// Immutable site description.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario<T> {
    pub sources: Vec<SourceSpec<T>>,
    pub diffusivity: T,
    /// `σ_ε`; zero means noiseless data and an unweighted data-fit term.
    pub noise_sigma: T,
    pub domain_lo: Point<T>,
    pub domain_hi: Point<T>,
    /// Feasible box for sensors. May be degenerate in one coordinate to pin
    /// sensors to a line. Defaults to the domain.
    pub sensor_lo: Point<T>,
    pub sensor_hi: Point<T>,
    pub prior_mean: Vec<T>,
    pub prior_sigma: T,
    /// `λ₁`
    pub elastic_l2: T,
    /// `λ₂`
    pub elastic_l1: T,
    pub wind_speed_factor: bool,
}

impl<T: Real> Scenario<T> {
    pub fn validate(&self) -> Result<()> {
        let np = self.sources.len();
        if np == 0 {
            return Err(Error::invalid("scenario needs at least one source"));
        }
        for c in 0..2 {
            if !(self.domain_lo[c] < self.domain_hi[c]) {
                return Err(Error::invalid("domain_lo must be below domain_hi"));
            }
            if self.sensor_lo[c] > self.sensor_hi[c] {
                return Err(Error::invalid("sensor box lo exceeds hi"));
            }
            if self.sensor_lo[c] < self.domain_lo[c] || self.sensor_hi[c] > self.domain_hi[c] {
                return Err(Error::invalid("sensor box must lie inside the domain"));
            }
        }
        if !(self.diffusivity > T::zero()) {
            return Err(Error::invalid("diffusivity must be positive"));
        }
        if !(self.noise_sigma >= T::zero()) {
            return Err(Error::invalid("noise_sigma must be non-negative"));
        }
        if !(self.elastic_l2 > T::zero()) {
            return Err(Error::invalid("elastic l2 weight must be positive"));
        }
        if !(self.elastic_l1 >= T::zero()) {
            return Err(Error::invalid("elastic l1 weight must be non-negative"));
        }
        if !(self.prior_sigma >= T::zero()) {
            return Err(Error::invalid("prior sigma must be non-negative"));
        }
        if self.prior_mean.len() != np {
            return Err(Error::Dimension(format!("{} prior means for {np} sources", self.prior_mean.len())));
        }
        for (j, s) in self.sources.iter().enumerate() {
            if s.stack_height < T::zero() {
                return Err(Error::invalid(format!("source {j} has negative stack height")));
            }
            for c in 0..2 {
                if s.location[c] < self.domain_lo[c] || s.location[c] > self.domain_hi[c] {
                    return Err(Error::invalid(format!("source {j} lies outside the domain")));
                }
            }
        }
        Ok(())
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn kernel(&self) -> PlumeKernel<T> {
        PlumeKernel { diffusivity: self.diffusivity, wind_speed_factor: self.wind_speed_factor }
    }

    /// `σ_ε⁻²`, or 1 for noiseless scenarios.
    pub fn data_weight(&self) -> T {
        if self.noise_sigma > T::zero() {
            T::one() / (self.noise_sigma * self.noise_sigma)
        } else {
            T::one()
        }
    }

    pub fn layout_feasible(&self, layout: &SensorLayout<T>) -> bool {
        layout.positions.iter().all(|p| {
            (0..2).all(|c| p[c] >= self.sensor_lo[c] && p[c] <= self.sensor_hi[c])
        })
    }

    pub fn check_layout(&self, layout: &SensorLayout<T>) -> Result<()> {
        if layout.is_empty() {
            return Err(Error::invalid("layout needs at least one sensor"));
        }
        if !self.layout_feasible(layout) {
            return Err(Error::invalid("sensor outside the feasible box"));
        }
        Ok(())
    }

    /// Clamps every coordinate into the sensor box.
    pub fn project(&self, layout: &SensorLayout<T>) -> SensorLayout<T> {
        SensorLayout {
            positions: layout
                .positions
                .iter()
                .map(|p| [p[0].max(self.sensor_lo[0]).min(self.sensor_hi[0]), p[1].max(self.sensor_lo[1]).min(self.sensor_hi[1])])
                .collect(),
        }
    }
}

/// `F(β, s)`: entry `(i, j)` is `A_j(s_i)`.
pub fn forward_matrix<T: Real>(scenario: &Scenario<T>, wind: &WindVector<T>, layout: &SensorLayout<T>) -> Result<Mat<T>> {
    let kernel = scenario.kernel();
    let np = scenario.num_sources();
    let mut f = Mat::zeros(layout.len(), np);
    for (i, s) in layout.positions.iter().enumerate() {
        for (j, src) in scenario.sources.iter().enumerate() {
            f[(i, j)] = kernel.value(src, *s, wind)?;
        }
    }
    Ok(f)
}

/// Kernel gradients for every (sensor, source) pair: `grads[i][j] = ∇_{s_i} A_j(s_i)`.
pub fn forward_gradients<T: Real>(
    scenario: &Scenario<T>,
    wind: &WindVector<T>,
    layout: &SensorLayout<T>,
) -> Result<Vec<Vec<Point<T>>>> {
    let kernel = scenario.kernel();
    layout
        .positions
        .iter()
        .map(|s| scenario.sources.iter().map(|src| kernel.gradient(src, *s, wind)).collect())
        .collect()
}

pub fn check_emissions<T: Real>(theta: &[T]) -> Result<()> {
    for (index, &v) in theta.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite("emission rate"));
        }
        if v < T::zero() {
            return Err(Error::NegativeEmission { index, value: v.to_f64_lossy() });
        }
    }
    Ok(())
}

/// `Φ = Fθ + ε` for a pre-drawn standard-normal vector `z` (ε = σ_ε z).
pub fn observations_from_noise<T: Real>(f: &Mat<T>, theta: &[T], noise_sigma: T, z: &[T]) -> Result<Vec<T>> {
    check_emissions(theta)?;
    if theta.len() != f.cols() || z.len() != f.rows() {
        return Err(Error::Dimension("observation synthesis".into()));
    }
    let mut phi = f.mul_vec(theta);
    if noise_sigma > T::zero() {
        for (p, &e) in phi.iter_mut().zip(z) {
            *p = *p + noise_sigma * e;
        }
    }
    Ok(phi)
}

/// Synthesizes `Φ = F(β, s) θ + ε`, `ε ~ N(0, σ_ε² I)`, from the given stream.
pub fn synthesize_observations<T: Real>(
    scenario: &Scenario<T>,
    wind: &WindVector<T>,
    layout: &SensorLayout<T>,
    theta: &[T],
    stream: crate::sampling::RngStream,
) -> Result<Vec<T>> {
    check_emissions(theta)?;
    let f = forward_matrix(scenario, wind, layout)?;
    let z = crate::sampling::standard_normals(stream, layout.len());
    observations_from_noise(&f, theta, scenario.noise_sigma, &z)
}
