use super::PreferenceTriplet;

pub const CONTEXT_MARKER: &str = "[CONTEXT]";
pub const RESPONSE_A_MARKER: &str = "[RESPONSE A]";
pub const RESPONSE_B_MARKER: &str = "[RESPONSE B]";

/// Renders `[CONTEXT]{prompt}[RESPONSE A]{a}[RESPONSE B]{b}` with no added whitespace.
pub fn format_template(t: &PreferenceTriplet) -> String {
    let mut out = String::with_capacity(
        CONTEXT_MARKER.len()
            + RESPONSE_A_MARKER.len()
            + RESPONSE_B_MARKER.len()
            + t.prompt.len()
            + t.response_a.len()
            + t.response_b.len(),
    );
    out.push_str(CONTEXT_MARKER);
    out.push_str(&t.prompt);
    out.push_str(RESPONSE_A_MARKER);
    out.push_str(&t.response_a);
    out.push_str(RESPONSE_B_MARKER);
    out.push_str(&t.response_b);
    out
}
