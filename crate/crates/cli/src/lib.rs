//! Experiment drivers behind the `albm` binary.

pub mod config;
pub mod data;
pub mod dss_cmd;
pub mod eval;
pub mod report;
pub mod synth;
pub mod train;

use albm::AlbmError;

/// Process exit status for a failed command: 3 when training diverged,
/// 2 for bad inputs or configuration, 1 otherwise.
pub fn exit_code(err: &AlbmError) -> u8 {
    match err {
        AlbmError::Divergence { .. } => 3,
        e if e.is_validation() => 2,
        _ => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(exit_code(&AlbmError::Divergence { epoch: 2 }), 3);
        assert_eq!(exit_code(&AlbmError::Config(vec!["x".into()])), 2);
        assert_eq!(exit_code(&AlbmError::Format("bad".into())), 2);
        let io = AlbmError::Io { path: "x".into(), source: std::io::Error::other("boom") };
        assert_eq!(exit_code(&io), 1);
    }
}
