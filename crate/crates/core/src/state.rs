//! Module state: the private storage shared by the tasks of one module.
//!
//! Cloning hooks realize the duplication contract: a module declares
//! whether it may be duplicated, and its state implements the deep copy.
//! In Rust the split between "implicit copy" and "deep copy" maps onto
//! `Clone` semantics directly: owned containers re-allocate, `Arc` fields
//! share read-only data by reference.

use std::any::Any;

/// Declared duplication capability of a module.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cloneability {
    /// Plain state, safe to duplicate memberwise.
    Cloneable,
    /// State with owned writable resources re-allocated by the clone hook.
    CloneableWithDeepCopy,
    /// State with a dependency that forbids duplication; the module's
    /// tasks can only ever run on a single worker.
    SequentialOnly,
}

impl Cloneability {
    pub fn is_cloneable(self) -> bool {
        !matches!(self, Cloneability::SequentialOnly)
    }
}

/// Object-safe downcast support, blanket-implemented for all state types.
pub trait AsAny {
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
}

impl<T: Any> AsAny for T {
    fn as_any(&self) -> &dyn Any {
        self
    }
    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Private storage shared by the tasks of one module.
pub trait ModuleState: AsAny + Send {
    /// Deep copy hook. Return `None` when the state cannot be duplicated;
    /// the runtime refuses to clone such a module even if its declared
    /// cloneability says otherwise.
    fn clone_state(&self) -> Option<Box<dyn ModuleState>> {
        None
    }

    /// Called when the enclosing sequence restarts after an abort. Control
    /// state (path selections, loop counters) returns to its initial value.
    fn reset_control(&mut self) {}
}

impl dyn ModuleState + '_ {
    pub fn downcast_ref<T: ModuleState + 'static>(&self) -> Option<&T> {
        self.as_any().downcast_ref::<T>()
    }

    pub fn downcast_mut<T: ModuleState + 'static>(&mut self) -> Option<&mut T> {
        self.as_any_mut().downcast_mut::<T>()
    }
}

/// State for modules that keep nothing between executions.
#[derive(Clone, Debug, Default)]
pub struct Stateless;

impl ModuleState for Stateless {
    fn clone_state(&self) -> Option<Box<dyn ModuleState>> {
        Some(Box::new(Stateless))
    }
}

/// Shared state of a switcher module: the path both its commute and
/// select tasks agree on. Initialized to the highest path, so the first
/// select of a fresh loop reads the entry input.
#[derive(Clone, Debug)]
pub struct SwitcherState {
    pub path_count: usize,
    pub selected_path: usize,
}

impl SwitcherState {
    pub fn new(path_count: usize) -> Self {
        assert!(path_count >= 1, "a switcher needs at least one path");
        Self {
            path_count,
            selected_path: path_count - 1,
        }
    }
}

impl ModuleState for SwitcherState {
    fn clone_state(&self) -> Option<Box<dyn ModuleState>> {
        // clones start from the documented initial state
        Some(Box::new(SwitcherState::new(self.path_count)))
    }

    fn reset_control(&mut self) {
        self.selected_path = self.path_count - 1;
    }
}
