//! `ftre` estimates the fault-tolerant resources (physical qubits and wall-clock
//! runtime) needed to run a logical quantum circuit on an early fault-tolerant
//! machine.
//!
//! The pipeline lowers an input circuit in two compilation stages and then
//! schedules the result against a configurable hardware architecture:
//!
//! 1. **ingest**: parse a QASM-2 subset or the native JSON circuit format.
//! 2. **stage 1**: decompose everything to Clifford + Rz (multi-qubit networks,
//!    KAK for two-qubit unitaries, ZYZ for single-qubit unitaries, then a
//!    merge/eject cleanup).
//! 3. **error budget**: pick the code distance, per-rotation synthesis error,
//!    and magic-state quality that meet a total circuit error target.
//! 4. **synthesis**: replace each Rz with a Clifford+T macro whose gate counts
//!    follow an empirical count model.
//! 5. **stage 2**: read-and-replace lowering to the architecture's primitive
//!    instruction set, with factory scheduling, CNOT routing, and the
//!    post-op-correction / movement / idling passes.
//! 6. **report**: critical path, serial bound, qubit counts, and cost
//!    breakdowns by primitive and by physical operation class.
//!
//! Shared types are re-exported at the crate root so downstream crates can
//! write `ftre::Circuit` instead of reaching into submodules.

pub mod arch;
pub mod budget;
pub mod circuit;
pub mod compile;
pub mod dag;
pub mod error;
pub mod ingest;
pub mod layout;
pub mod report;
pub mod stage1;
pub mod synthesis;
pub mod synthetic;

pub use arch::{Architecture, GateSpeeds, PrimitiveRecipe, SpeedColumn};
pub use budget::{BudgetSolution, CultivationTable, NoiseModel};
pub use circuit::{Circuit, GateKind, Level, Op};
pub use compile::{compile_to_primitive, CompiledCircuit};
pub use dag::{CriticalPath, Durations, OpDag};
pub use error::{Diagnostic, Error, Result, Severity};
pub use layout::{CellRole, LayoutGrid, LayoutStrategy};
pub use report::{ReportOptions, ResourceReport};
pub use synthesis::SynthModel;
