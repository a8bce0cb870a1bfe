//! Emulation of hardware neuron primitives: a fixed-point digital neuron,
//! magnet retention physics, the stochastic MTJ neuron, the general RC-input
//! neuron and memristor crossbar synapses.

pub mod crossbar;
pub mod digital;
pub mod magnet;
pub mod neuron;
pub mod readout;

pub use crossbar::{program_crossbar, program_crossbar_with_range, CrossbarArray};
pub use digital::{
    digital_error_bound, digital_neuron_eval, lfsr_next, FixedPointFormat, Lfsr, TanhLut, LFSR_TAPS,
};
pub use magnet::{
    barrier_energy, retention_sweep, retention_time, Barrier, MagnetParams, RetentionPoint, K_B,
    MU0,
};
pub use neuron::{grid, CurveMeta, CurvePoint, GeneralNeuron, MtjNeuron, TransferCurve};
pub use readout::{
    compensated_quantization, fit_hardware_readout, hardware_esn_readout, HardwareReadoutConfig,
};
