use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("conserved level {0} lies outside [-1, 1]")]
    InvalidLevel(f64),
    #[error("invalid input: {0}")]
    Domain(String),
    #[error("strand escapes to infinity at parameter {at}")]
    FiniteEscape { at: f64 },
    #[error("parameter {at} is outside the integrated span [{lo}, {hi}]")]
    Coverage { at: f64, lo: f64, hi: f64 },
    #[error("norm constraint c_{j}·v + 1 is not positive at parameter {at}")]
    ConstraintViolation { j: usize, at: f64 },
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("potential is constant, so no period exists")]
    ConstantPotential,
    #[error("potential tends to an equilibrium, so the period is infinite")]
    Aperiodic,
    #[error("alpha components must be distinct and nonzero")]
    DegenerateAlpha,
    #[error("sign normalization needs nine nonzero components")]
    CannotNormalize,
    #[error("parameter {at} is outside the maximal interval ({lo}, {hi})")]
    OutsideInterval { at: f64, lo: f64, hi: f64 },
    #[error("density a + bv + cw = {value} is not positive at (s, t) = ({s}, {t})")]
    SingularDensity { s: f64, t: f64, value: f64 },
    #[error("parameters are isotropic (xi = 0)")]
    Isotropic,
    #[error("lattice determinant is zero")]
    DegenerateLattice,
    #[error("sampled value spread {spread:e} exceeds the constancy bound")]
    ConstancyViolation { spread: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
