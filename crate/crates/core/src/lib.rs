//! Digital twin of a soft electromagnetic fingertip actuator.
//!
//! * [`magnetics`] — coil/magnet fields and forces by filament superposition.
//! * [`design`] — geometry sweep and refinement of force per √(power·mass).
//! * [`electromech`] — lumped coil/suspension dynamics, calibration, heating.
//! * [`renderer`] — haptic rendering loop that turns contacts into voltages.
//! * [`pipeline_io`] — device framing, pose logs, traces.
//! * [`replay`] — pose log through renderer and simulated device.

pub mod design;
pub mod electromech;
pub mod elliptic;
pub mod magnetics;
pub mod pipeline_io;
pub mod renderer;
pub mod replay;
pub mod simplex;
