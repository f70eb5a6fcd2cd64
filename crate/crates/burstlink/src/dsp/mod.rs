//! Stream-domain signal processing kernels and their block wrappers.

pub mod channel;
pub mod fir;
pub mod fm;
pub mod measure;
pub mod rrc;

pub use channel::{channel, ChannelBlock, ChannelKernel, ChannelParams, GaussianGen};
pub use fir::{fir_filter, interpolate, FirFilterBlock, FirKernel};
pub use fm::{
    quadrature_demod, vco, BurstGate, QuadratureDemod, QuadratureDemodBlock, Vco, VcoBlock,
};
pub use measure::{
    moving_average, power_envelope, CorrelatorNormalize, CorrelatorNormalizeBlock, MovingAverage,
    MovingAverageBlock, PowerEnvelopeBlock, WindowedVariance, WindowedVarianceBlock,
    METRIC_EPSILON,
};
pub use rrc::{design_rrc, DspError, FirTaps};
