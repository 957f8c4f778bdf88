//! Problem resolution: built-in tags and problem files, plus the content
//! digest recorded in run manifests.

use crate::CliError;
use cdpinn_core::problem::{builtin_h2, load_problem, ProblemSpec};
use sha2::{Digest, Sha256};
use std::path::Path;

const BUILTIN_TAGS: [&str; 4] = ["h2:1.0", "h2:1.5", "h2:2.0", "h2:2.5"];

/// Maps `h2:<distance>` to the built-in table or anything else to a file
/// path. Unknown tags list what is available.
pub fn resolve(selector: &str) -> Result<ProblemSpec, CliError> {
    if let Some(distance) = selector.strip_prefix("h2:") {
        let parsed: f64 = distance.parse().map_err(|_| unknown_tag(selector))?;
        return builtin_h2(parsed).map_err(|_| unknown_tag(selector));
    }
    if selector.contains(':') {
        return Err(unknown_tag(selector));
    }
    let path = Path::new(selector);
    if !path.exists() {
        return Err(CliError::Config(format!(
            "problem {selector:?} is neither a built-in tag ({}) nor an existing file",
            BUILTIN_TAGS.join(", ")
        )));
    }
    Ok(load_problem(path)?)
}

fn unknown_tag(selector: &str) -> CliError {
    CliError::Config(format!(
        "unknown problem tag {selector:?}; built-ins are {}",
        BUILTIN_TAGS.join(", ")
    ))
}

/// Content hash over the parsed problem, so equivalent spellings of the
/// same matrices produce the same digest.
pub fn digest(p: &ProblemSpec) -> String {
    let mut hasher = Sha256::new();
    hasher.update(p.label.as_bytes());
    hasher.update((p.n_qubits as u64).to_le_bytes());
    match p.bond_distance_angstrom {
        Some(d) => {
            hasher.update([1u8]);
            hasher.update(d.to_le_bytes());
        }
        None => hasher.update([0u8]),
    }
    for m in [&p.h_initial, &p.h_final] {
        for z in m.data() {
            hasher.update(z.re.to_le_bytes());
            hasher.update(z.im.to_le_bytes());
        }
    }
    let bytes = hasher.finalize();
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_tags_resolve_and_unknown_ones_list_the_choices() {
        let p = resolve("h2:1.0").unwrap();
        assert_eq!(p.n_qubits, 2);
        match resolve("h2:3.0") {
            Err(CliError::Config(message)) => assert!(message.contains("h2:2.5")),
            other => panic!("expected a config error, got {other:?}"),
        }
        match resolve("lih:1.0") {
            Err(CliError::Config(message)) => assert!(message.contains("h2:1.0")),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn digest_separates_problems_and_is_stable() {
        let a = digest(&resolve("h2:1.0").unwrap());
        let b = digest(&resolve("h2:1.5").unwrap());
        assert_eq!(a.len(), 64);
        assert_ne!(a, b);
        assert_eq!(a, digest(&resolve("h2:1.0").unwrap()));
    }
}
