use serde::{Deserialize, Serialize};
use thiserror::Error;

/// First line of every fixture kernel file.
pub const KERNEL_MARKER: &str = "# arena-fixture kernel v1";

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("missing `{KERNEL_MARKER}` marker")]
    NoMarker,
    #[error("malformed kernel: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub compiles: bool,
    pub correct: bool,
    /// Largest problem size the kernel handles; unlimited when absent.
    pub max_size: Option<i64>,
    pub scale: f64,
    pub base_ms: f64,
    pub per_size_ms: f64,
}

impl KernelSpec {
    pub fn parse(text: &str) -> Result<Self, KernelError> {
        let body = text.strip_prefix(KERNEL_MARKER).ok_or(KernelError::NoMarker)?;
        serde_yaml::from_str(body).map_err(|e| KernelError::Malformed(e.to_string()))
    }

    pub fn render(&self) -> String {
        format!(
            "{KERNEL_MARKER}\n{}",
            serde_yaml::to_string(self).expect("kernel serializes")
        )
    }

    pub fn handles(&self, size: i64) -> bool {
        self.correct && self.max_size.is_none_or(|m| size <= m)
    }

    /// Scripted mean time for one case.
    pub fn time_ms(&self, size: i64) -> f64 {
        self.scale * (self.base_ms + self.per_size_ms * size as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_parse_round_trip() {
        let k = KernelSpec {
            compiles: true,
            correct: true,
            max_size: Some(4096),
            scale: 1.0,
            base_ms: 2.0,
            per_size_ms: 0.25,
        };
        assert_eq!(KernelSpec::parse(&k.render()).unwrap(), k);
        assert_eq!(k.time_ms(8), 4.0);
        assert!(k.handles(4096) && !k.handles(4097));
        assert_eq!(KernelSpec::parse("compiles: true"), Err(KernelError::NoMarker));
        assert!(matches!(
            KernelSpec::parse(&format!("{KERNEL_MARKER}\nbogus: 1\n")),
            Err(KernelError::Malformed(_))
        ));
    }
}
