//! Parameter resolution for experiments. Every experiment declares its
//! full set of knobs with default values; overrides from the command
//! line or a config file land on top. A key without a default is a typo
//! in the invocation, not a new knob, and is rejected.

use std::collections::BTreeMap;

use crate::{Result, RunError};

#[derive(Debug, Clone)]
pub struct Params {
    values: BTreeMap<String, String>,
}

impl Params {
    pub fn resolve(
        defaults: &[(&str, &str)],
        overrides: &BTreeMap<String, String>,
    ) -> Result<Params> {
        let mut values: BTreeMap<String, String> =
            defaults.iter().map(|&(k, v)| (k.to_string(), v.to_string())).collect();
        for (k, v) in overrides {
            if !values.contains_key(k) {
                let known: Vec<&str> = defaults.iter().map(|&(k, _)| k).collect();
                return Err(RunError::Usage(format!(
                    "unknown parameter {k:?}; this experiment accepts: {}",
                    known.join(", ")
                )));
            }
            values.insert(k.clone(), v.clone());
        }
        Ok(Params { values })
    }

    /// The fully resolved key=value map, exactly as echoed into the
    /// manifest.
    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    fn raw(&self, key: &str) -> Result<&str> {
        self.values.get(key).map(String::as_str).ok_or_else(|| {
            RunError::Failed(format!("parameter {key:?} was never given a default"))
        })
    }

    pub fn get_str(&self, key: &str) -> Result<&str> {
        self.raw(key)
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let raw = self.raw(key)?;
        raw.parse().map_err(|_| bad(key, raw, "a number"))
    }

    pub fn get_u64(&self, key: &str) -> Result<u64> {
        let raw = self.raw(key)?;
        raw.parse().map_err(|_| bad(key, raw, "a nonnegative integer"))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        let raw = self.raw(key)?;
        raw.parse().map_err(|_| bad(key, raw, "a nonnegative integer"))
    }

    /// Comma-separated numbers, at least one.
    pub fn get_f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.raw(key)?;
        let list: Vec<f64> = raw
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| bad(key, raw, "a comma-separated number list")))
            .collect::<Result<_>>()?;
        if list.is_empty() {
            return Err(bad(key, raw, "a nonempty list"));
        }
        Ok(list)
    }

    /// Comma-separated nonnegative integers, at least one.
    pub fn get_usize_list(&self, key: &str) -> Result<Vec<usize>> {
        let raw = self.raw(key)?;
        let list: Vec<usize> = raw
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| bad(key, raw, "a comma-separated integer list")))
            .collect::<Result<_>>()?;
        if list.is_empty() {
            return Err(bad(key, raw, "a nonempty list"));
        }
        Ok(list)
    }
}

fn bad(key: &str, raw: &str, wanted: &str) -> RunError {
    RunError::Usage(format!("parameter {key} must be {wanted}, got {raw:?}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULTS: &[(&str, &str)] = &[("trials", "20"), ("gamma", "0.5"), ("lengths", "4,8")];

    fn over(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|&(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn overrides_land_on_defaults() {
        let p = Params::resolve(DEFAULTS, &over(&[("gamma", "0.25")])).unwrap();
        assert_eq!(p.get_usize("trials").unwrap(), 20);
        assert_eq!(p.get_f64("gamma").unwrap(), 0.25);
        assert_eq!(p.get_usize_list("lengths").unwrap(), vec![4, 8]);
        assert_eq!(p.resolved().get("gamma").unwrap(), "0.25");
    }

    #[test]
    fn unknown_keys_are_rejected_with_the_known_list() {
        let err = Params::resolve(DEFAULTS, &over(&[("gama", "0.25")])).unwrap_err();
        match err {
            RunError::Usage(msg) => {
                assert!(msg.contains("gama") && msg.contains("trials"), "{msg}");
            }
            other => panic!("expected a usage error, got {other:?}"),
        }
    }

    #[test]
    fn bad_values_are_usage_errors() {
        let p = Params::resolve(DEFAULTS, &over(&[("trials", "many")])).unwrap();
        assert!(matches!(p.get_usize("trials"), Err(RunError::Usage(_))));
        let p = Params::resolve(DEFAULTS, &over(&[("lengths", "4,,8")])).unwrap();
        assert!(matches!(p.get_usize_list("lengths"), Err(RunError::Usage(_))));
    }

    #[test]
    fn lists_accept_spaces_and_scientific_floats() {
        let p = Params::resolve(&[("xs", "1e-3, 2.5 ,4")], &BTreeMap::new()).unwrap();
        assert_eq!(p.get_f64_list("xs").unwrap(), vec![1e-3, 2.5, 4.0]);
    }
}
