//! Weighted type domains. Each field carries a weight per candidate type;
//! runtime hints bump weights, query analysis pins types outright (a pin
//! behaves like infinite weight).

use rand::Rng;

use super::ValueType;

/// Weight added per runtime type hint. Chosen so a single hint dominates
/// the uniform priors within a few requests.
pub const HINT_WEIGHT: u64 = 4;

const INITIAL_WEIGHT: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeDomain {
    weights: [(ValueType, u64); 3],
    pinned: Option<ValueType>,
}

impl TypeDomain {
    pub fn uniform() -> Self {
        Self {
            weights: [
                (ValueType::Int, INITIAL_WEIGHT),
                (ValueType::Str, INITIAL_WEIGHT),
                (ValueType::Bool, INITIAL_WEIGHT),
            ],
            pinned: None,
        }
    }

    pub fn pinned(ty: ValueType) -> Self {
        let mut d = Self::uniform();
        d.pinned = Some(ty);
        d
    }

    pub fn pin(&mut self, ty: ValueType) {
        if self.pinned.is_none() {
            self.pinned = Some(ty);
        }
    }

    pub fn is_pinned(&self) -> bool {
        self.pinned.is_some()
    }

    pub fn weight(&self, ty: ValueType) -> u64 {
        self.weights
            .iter()
            .find(|(t, _)| *t == ty)
            .map(|(_, w)| *w)
            .unwrap_or(0)
    }

    /// Bump the weight of `ty`; pinned domains are left alone.
    pub fn add_hint(&mut self, ty: ValueType) {
        if self.pinned.is_some() {
            return;
        }
        for (t, w) in &mut self.weights {
            if *t == ty {
                *w = w.saturating_add(HINT_WEIGHT);
            }
        }
    }

    /// Weighted reservoir draw (A-res): each type gets key u^(1/w) for
    /// u ~ U(0,1); the largest key wins. A pin always wins.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> ValueType {
        if let Some(ty) = self.pinned {
            return ty;
        }
        let mut best: Option<(f64, ValueType)> = None;
        for (ty, w) in self.weights {
            if w == 0 {
                continue;
            }
            let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
            let key = u.powf(1.0 / w as f64);
            if best.map(|(k, _)| key > k).unwrap_or(true) {
                best = Some((key, ty));
            }
        }
        best.map(|(_, ty)| ty)
            .expect("at least one weight is positive")
    }
}

impl Default for TypeDomain {
    fn default() -> Self {
        Self::uniform()
    }
}
