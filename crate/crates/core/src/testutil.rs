//! Fixtures shared by unit tests.

use crate::gaussian::StateMatrix;
use crate::sensor::SensorConfig;

pub(crate) fn reference_sensor() -> SensorConfig {
    SensorConfig {
        width: 128,
        height: 128,
        dx: 1.0,
        dy: 1.0,
        sigma_h2: 2.0,
        noise_var: 1.0,
        h_threshold: 1.0,
    }
}

pub(crate) fn reference_q() -> StateMatrix {
    let block = nalgebra::Matrix2::new(0.25, 0.5, 0.5, 1.0);
    nalgebra::Matrix2::<f64>::identity().kronecker(&block) * 1e-4
}
