//! Memoized systems and barriers keyed by `(spec, form, grid)`.
//!
//! Each key gets its own slot mutex, so a given system or barrier is built by
//! exactly one thread while unrelated keys proceed in parallel. An optional
//! [`MatrixStore`] persists cost and barrier matrices across processes.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::error::Result;
use crate::hamiltonian::HamiltonianSpec;
use crate::minplus::CostMatrix;
use crate::torus::{OneForm, TorusGrid};
use crate::weak_kam::{AubryData, BarrierMatrix, BarrierParams, WeakKamSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Cost,
    #[serde(rename = "h")]
    Barrier,
}

impl MatrixKind {
    pub fn tag(self) -> &'static str {
        match self {
            MatrixKind::Cost => "cost",
            MatrixKind::Barrier => "h",
        }
    }
}

/// Everything a stored matrix depends on.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatrixKey {
    pub kind: MatrixKind,
    pub grid: TorusGrid,
    pub spec: HamiltonianSpec,
    pub form: OneForm,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub barrier: Option<BarrierParams>,
}

impl MatrixKey {
    /// Canonical JSON used for hashing and sidecars.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("key serializes")
    }
}

/// Persistent matrix storage. Failures to save are the store's business;
/// a failed load is a miss.
pub trait MatrixStore: Send + Sync {
    fn load(&self, key: &MatrixKey) -> Option<CostMatrix>;
    fn save(&self, key: &MatrixKey, matrix: &CostMatrix);
}

/// A system with lazily computed barrier and Aubry data.
pub struct Solved {
    pub system: WeakKamSystem,
    barriers: Mutex<HashMap<(u64, u64), Arc<BarrierMatrix>>>,
    aubry: Mutex<HashMap<(u64, u64, u64), Arc<AubryData>>>,
}

impl Solved {
    fn new(system: WeakKamSystem) -> Self {
        Self { system, barriers: Mutex::default(), aubry: Mutex::default() }
    }

    fn key(&self, kind: MatrixKind, params: Option<BarrierParams>) -> MatrixKey {
        MatrixKey {
            kind,
            grid: self.system.grid().clone(),
            spec: self.system.spec().clone(),
            form: self.system.form().clone(),
            barrier: params,
        }
    }

    pub fn barrier(&self, params: &BarrierParams, store: Option<&dyn MatrixStore>) -> Result<Arc<BarrierMatrix>> {
        // held across the computation: single writer per system
        let mut slots = self.barriers.lock().expect("barrier cache poisoned");
        if let Some(h) = slots.get(&(params.n_max, params.window)) {
            return Ok(h.clone());
        }
        let key = self.key(MatrixKind::Barrier, Some(*params));
        let loaded = store.and_then(|s| s.load(&key)).filter(|m| m.n_states() == self.system.grid().n_states());
        let h = match loaded {
            Some(m) => BarrierMatrix::from_matrix(m, self.system.alpha(), *params),
            None => {
                let h = self.system.barrier(params)?;
                if let Some(s) = store {
                    s.save(&key, h.matrix());
                }
                h
            }
        };
        let h = Arc::new(h);
        slots.insert((params.n_max, params.window), h.clone());
        Ok(h)
    }

    pub fn aubry(&self, params: &BarrierParams, tol_zero: f64, store: Option<&dyn MatrixStore>) -> Result<Arc<AubryData>> {
        let h = self.barrier(params, store)?;
        let mut slots = self.aubry.lock().expect("aubry cache poisoned");
        let k = (params.n_max, params.window, tol_zero.to_bits());
        if let Some(a) = slots.get(&k) {
            return Ok(a.clone());
        }
        let a = Arc::new(AubryData::compute(&h, tol_zero)?);
        slots.insert(k, a.clone());
        Ok(a)
    }
}

type Slot = Arc<Mutex<Option<Arc<Solved>>>>;

#[derive(Default)]
pub struct SystemCache {
    slots: Mutex<HashMap<String, Slot>>,
    store: Option<Arc<dyn MatrixStore>>,
}

impl SystemCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_store(store: Arc<dyn MatrixStore>) -> Self {
        Self { slots: Mutex::default(), store: Some(store) }
    }

    pub fn store(&self) -> Option<&dyn MatrixStore> {
        self.store.as_deref()
    }

    pub fn system(&self, grid: &TorusGrid, spec: &HamiltonianSpec, form: &OneForm) -> Result<Arc<Solved>> {
        let key = MatrixKey { kind: MatrixKind::Cost, grid: grid.clone(), spec: spec.clone(), form: form.clone(), barrier: None };
        let id = key.canonical_json();
        let slot = self.slots.lock().expect("system cache poisoned").entry(id).or_default().clone();
        let mut guard = slot.lock().expect("system slot poisoned");
        if let Some(s) = guard.as_ref() {
            return Ok(s.clone());
        }
        let loaded = self
            .store()
            .and_then(|s| s.load(&key))
            .and_then(|m| m.with_band(grid).ok());
        let system = match loaded {
            Some(cost) => WeakKamSystem::from_cost(grid, spec, form, cost)?,
            None => {
                let sys = WeakKamSystem::new(grid, spec, form)?;
                if let Some(s) = self.store() {
                    s.save(&key, sys.cost());
                }
                sys
            }
        };
        let solved = Arc::new(Solved::new(system));
        *guard = Some(solved.clone());
        Ok(solved)
    }

    /// Number of distinct systems built or loaded so far.
    pub fn len(&self) -> usize {
        self.slots.lock().expect("system cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::build_grid;

    #[derive(Default)]
    struct MemStore {
        map: Mutex<HashMap<String, CostMatrix>>,
        saves: Mutex<usize>,
    }

    impl MatrixStore for MemStore {
        fn load(&self, key: &MatrixKey) -> Option<CostMatrix> {
            self.map.lock().unwrap().get(&key.canonical_json()).cloned()
        }
        fn save(&self, key: &MatrixKey, m: &CostMatrix) {
            *self.saves.lock().unwrap() += 1;
            self.map.lock().unwrap().insert(key.canonical_json(), m.clone());
        }
    }

    #[test]
    fn systems_are_shared_and_stored() {
        let store = Arc::new(MemStore::default());
        let g = build_grid(1, 16, 0.25, 2.0).unwrap();
        let pend = HamiltonianSpec::pendulum();
        let form = OneForm::constant(vec![0.0]);
        let params = BarrierParams { n_max: 64, window: 4 };

        let cold = SystemCache::with_store(store.clone());
        let a = cold.system(&g, &pend, &form).unwrap();
        let b = cold.system(&g, &pend, &form).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let h_cold = a.barrier(&params, cold.store()).unwrap();
        assert_eq!(*store.saves.lock().unwrap(), 2);

        let warm = SystemCache::with_store(store.clone());
        let c = warm.system(&g, &pend, &form).unwrap();
        let h_warm = c.barrier(&params, warm.store()).unwrap();
        assert_eq!(*store.saves.lock().unwrap(), 2);
        assert_eq!(c.system.cost(), a.system.cost());
        assert!(c.system.cost().band().is_some());
        assert_eq!(h_warm.matrix(), h_cold.matrix());
        assert_eq!(c.system.alpha().to_bits(), a.system.alpha().to_bits());
    }

    #[test]
    fn keys_separate_forms() {
        let cache = SystemCache::new();
        let g = build_grid(1, 8, 0.25, 2.0).unwrap();
        let free = HamiltonianSpec::free(1).unwrap();
        let a = cache.system(&g, &free, &OneForm::constant(vec![0.0])).unwrap();
        let b = cache.system(&g, &free, &OneForm::constant(vec![1.0])).unwrap();
        assert!(!Arc::ptr_eq(&a, &b));
        assert_eq!(cache.len(), 2);
    }
}
