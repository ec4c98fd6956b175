use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;

use crate::envs::{Action, EnvFamily, EnvSettings, ParamVector};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// State-action pairs over which the expected Wasserstein constraint is
/// evaluated. Collected at the reference dynamics under uniform-random actions.
#[derive(Debug, Clone, PartialEq)]
pub struct StateActionBucket {
    family: EnvFamily,
    pairs: Vec<(Vec<f64>, Action)>,
    source_params: ParamVector,
}

impl StateActionBucket {
    pub fn new(
        family: EnvFamily,
        pairs: Vec<(Vec<f64>, Action)>,
        source_params: ParamVector,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("bucket must not be empty".into()));
        }
        Ok(Self {
            family,
            pairs,
            source_params,
        })
    }

    pub fn family(&self) -> EnvFamily {
        self.family
    }

    pub fn pairs(&self) -> &[(Vec<f64>, Action)] {
        &self.pairs
    }

    pub fn source_params(&self) -> &ParamVector {
        &self.source_params
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn cache_key(family: EnvFamily, phi0: &ParamVector, seed: u64) -> String {
        let phi: Vec<String> = phi0.values().iter().map(|v| v.to_string()).collect();
        format!(
            "# wr2l-bucket family={family} seed={seed} phi0={}",
            phi.join(";")
        )
    }

    /// Writes the bucket as CSV, keyed by `(family, phi0, seed)` in the first line.
    pub fn save_csv(&self, path: &Path, seed: u64) -> Result<()> {
        let mut out = Self::cache_key(self.family, &self.source_params, seed);
        out.push('\n');
        for (s, a) in &self.pairs {
            let mut fields: Vec<String> = s.iter().map(|v| v.to_string()).collect();
            match a {
                Action::Discrete(k) => fields.push(format!("d{k}")),
                Action::Continuous(v) => fields.extend(v.iter().map(|x| format!("c{x}"))),
            }
            writeln!(out, "{}", fields.join(",")).expect("writing to a String");
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Loads a cached bucket, refusing it if it was built for another key.
    pub fn load_csv(
        path: &Path,
        settings: &EnvSettings,
        phi0: &ParamVector,
        seed: u64,
    ) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != Self::cache_key(settings.family, phi0, seed) {
            return Err(Error::Format(format!(
                "bucket cache {} was built for a different (family, phi0, seed)",
                path.display()
            )));
        }
        let state_dim = settings.spec()?.state_dim;
        let mut pairs = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let bad = || Error::Format(format!("{}: line {}", path.display(), lineno + 2));
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() <= state_dim {
                return Err(bad());
            }
            let state = fields[..state_dim]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            let rest = &fields[state_dim..];
            let action = if let Some(k) = rest[0].strip_prefix('d') {
                Action::Discrete(k.parse().map_err(|_| bad())?)
            } else {
                Action::Continuous(
                    rest.iter()
                        .map(|f| {
                            f.strip_prefix('c')
                                .and_then(|x| x.parse::<f64>().ok())
                                .ok_or_else(bad)
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            };
            pairs.push((state, action));
        }
        Self::new(settings.family, pairs, phi0.clone())
    }
}

/// Rolls out uniform-random actions at `phi0` until at least `n_pairs` pairs
/// are pooled, then draws `n_pairs` of them uniformly without replacement.
pub fn build_bucket(
    settings: &EnvSettings,
    phi0: &ParamVector,
    n_pairs: usize,
    seed: u64,
) -> Result<StateActionBucket> {
    if n_pairs == 0 {
        return Err(Error::InvalidArgument("n_pairs must be >= 1".into()));
    }
    let mut env = settings.make(phi0, seed)?;
    let space = env.spec().action_space.clone();
    let mut rng = rng::stream(seed, Purpose::Bucket, 0);
    let mut pool = Vec::with_capacity(n_pairs);
    while pool.len() < n_pairs {
        env.reset();
        while !env.is_done() {
            let a = space.sample_uniform(&mut rng);
            let state = env.state().to_vec();
            env.step(&a)?;
            pool.push((state, a));
        }
    }
    let picked = index::sample(&mut rng, pool.len(), n_pairs);
    let pairs = picked.iter().map(|i| pool[i].clone()).collect();
    StateActionBucket::new(settings.family, pairs, phi0.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defaults::cartpole as c;

    #[test]
    fn cartpole_bucket_states_are_reachable() {
        let settings = EnvSettings::new(EnvFamily::Cartpole);
        let phi0 = settings.reference_params().unwrap();
        let b = build_bucket(&settings, &phi0, 100, 5).unwrap();
        assert_eq!(b.len(), 100);
        // Stored states are pre-action states, so none of them is terminal.
        for (s, _) in b.pairs() {
            assert!(s[2].abs() <= c::THETA_MAX && s[0].abs() <= c::X_MAX);
        }
    }

    #[test]
    fn singleton_and_determinism() {
        let settings = EnvSettings::new(EnvFamily::Pendulum);
        let phi0 = settings.reference_params().unwrap();
        assert_eq!(build_bucket(&settings, &phi0, 1, 0).unwrap().len(), 1);
        assert_eq!(
            build_bucket(&settings, &phi0, 64, 3).unwrap(),
            build_bucket(&settings, &phi0, 64, 3).unwrap()
        );
        assert!(build_bucket(&settings, &phi0, 0, 3).is_err());
    }

    #[test]
    fn csv_cache_round_trip_and_key_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bucket.csv");
        for settings in [
            EnvSettings::new(EnvFamily::Cartpole),
            EnvSettings::new(EnvFamily::Pendulum),
        ] {
            let phi0 = settings.reference_params().unwrap();
            let b = build_bucket(&settings, &phi0, 30, 2).unwrap();
            b.save_csv(&path, 2).unwrap();
            assert_eq!(
                StateActionBucket::load_csv(&path, &settings, &phi0, 2).unwrap(),
                b
            );
            assert!(StateActionBucket::load_csv(&path, &settings, &phi0, 3).is_err());
        }
    }
}
