//! Small shared helpers.

/// Deterministic 12-significant-digit rendering used by every CSV emitter,
/// so repeated runs produce byte-identical files.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        // Avoid the "-0" artifact.
        return format!("{:.11e}", 0.0);
    }
    format!("{x:.11e}")
}
