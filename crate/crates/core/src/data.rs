//! Bundled case files.

pub const IEEE39: &str = include_str!("../data/case39.case");
pub const WSCC9: &str = include_str!("../data/case9.case");
pub const THREE_BUS: &str = include_str!("../data/case3.case");
pub const TWO_BUS: &str = include_str!("../data/case2.case");

/// Looks up a bundled case by name (`ieee39`, `wscc9`, `case3`, `case2`).
pub fn builtin(name: &str) -> Option<&'static str> {
    match name {
        "ieee39" | "case39" => Some(IEEE39),
        "wscc9" | "case9" => Some(WSCC9),
        "case3" => Some(THREE_BUS),
        "case2" => Some(TWO_BUS),
        _ => None,
    }
}
