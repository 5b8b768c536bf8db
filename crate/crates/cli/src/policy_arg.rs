use std::str::FromStr;

/// Drift part of `--policy`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MuArg {
    Const(f64),
    FromSolution,
}

/// `--policy q=..,Q=..,S=..,mu=const:<v>|from-solution`; `mu` defaults to `from-solution`.
#[allow(non_snake_case)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyArg {
    pub q: f64,
    pub Q: f64,
    pub S: f64,
    pub mu: MuArg,
}

impl FromStr for PolicyArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (mut q, mut big_q, mut big_s, mut mu) = (None, None, None, MuArg::FromSolution);
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got `{part}`"))?;
            let num = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("`{key}`: cannot parse `{v}`: {e}"))
            };
            match key.trim() {
                "q" => q = Some(num(value)?),
                "Q" => big_q = Some(num(value)?),
                "S" => big_s = Some(num(value)?),
                "mu" => {
                    let value = value.trim();
                    mu = if value == "from-solution" {
                        MuArg::FromSolution
                    } else if let Some(v) = value.strip_prefix("const:") {
                        MuArg::Const(num(v)?)
                    } else {
                        return Err(format!("`mu` must be const:<value> or from-solution, got `{value}`"));
                    };
                }
                other => return Err(format!("unknown key `{other}` (expected q, Q, S, mu)")),
            }
        }
        let need = |v: Option<f64>, k: &str| v.ok_or_else(|| format!("missing `{k}`"));
        Ok(PolicyArg {
            q: need(q, "q")?,
            Q: need(big_q, "Q")?,
            S: need(big_s, "S")?,
            mu,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_drift_forms() {
        let p: PolicyArg = "q=0.7, Q=1.25,S=3.1,mu=const:-0.5".parse().unwrap();
        assert_eq!((p.q, p.Q, p.S, p.mu), (0.7, 1.25, 3.1, MuArg::Const(-0.5)));
        let p: PolicyArg = "S=3,Q=1,q=0.5".parse().unwrap();
        assert_eq!(p.mu, MuArg::FromSolution);
    }

    #[test]
    fn rejects_bad_input() {
        assert!("q=0.7,Q=1.25".parse::<PolicyArg>().unwrap_err().contains("missing `S`"));
        assert!("q=a,Q=1,S=2".parse::<PolicyArg>().is_err());
        assert!("q=1,Q=1,S=2,mu=linear".parse::<PolicyArg>().is_err());
        assert!("q=1,Q=1,S=2,x=3".parse::<PolicyArg>().is_err());
    }
}
