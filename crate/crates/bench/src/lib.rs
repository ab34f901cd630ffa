//! Shared fixtures for the pipeline benchmarks.

use num_complex::Complex64;
use pilotwave::reference::table1_row;
use pilotwave::spectral::solve_reference_state;
use pilotwave::{Parity, Superposition, TorusShape};

/// The first Lyapunov-table superposition with printed phase energies.
pub fn table2_superposition() -> Superposition {
    let shape = TorusShape::reference();
    let c = (0.5f64).sqrt();
    let state = |parity, n, m| {
        solve_reference_state(&shape, 32, table1_row(parity, n, m).unwrap()).unwrap()
    };
    Superposition::new(
        vec![
            (state(Parity::Plus, 3, 2), Complex64::new(c, 0.0)),
            (state(Parity::Minus, 3, 2), Complex64::new(c, 0.0)),
        ],
        shape,
    )
    .unwrap()
    .with_reference_energies()
    .unwrap()
}
