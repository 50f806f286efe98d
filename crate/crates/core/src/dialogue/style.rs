//! Controller style overrides, limited to colours, fonts and spacing.

use std::collections::BTreeMap;

/// Nothing here can move, hide, clip or stack an element.
pub const ALLOWED_STYLE_PROPERTIES: &[&str] = &[
    "background-color",
    "border-color",
    "border-radius",
    "border-style",
    "border-width",
    "color",
    "font-family",
    "font-size",
    "font-style",
    "font-weight",
    "letter-spacing",
    "line-height",
    "margin",
    "margin-bottom",
    "margin-left",
    "margin-right",
    "margin-top",
    "padding",
    "padding-bottom",
    "padding-left",
    "padding-right",
    "padding-top",
    "text-decoration",
    "text-transform",
];

/// Keep allow-listed properties with harmless values; property names are
/// lower-cased and trimmed. Applying it twice changes nothing.
pub fn sanitize_style(style: &BTreeMap<String, String>) -> BTreeMap<String, String> {
    style
        .iter()
        .filter_map(|(k, v)| {
            let k = k.trim().to_ascii_lowercase();
            let v = v.trim().to_owned();
            (ALLOWED_STYLE_PROPERTIES.contains(&k.as_str()) && value_ok(&k, &v)).then_some((k, v))
        })
        .collect()
}

fn value_ok(property: &str, value: &str) -> bool {
    if value.is_empty() || value.len() > 64 {
        return false;
    }
    let lower = value.to_ascii_lowercase();
    if lower.contains("url(")
        || lower.contains("expression")
        || lower.contains("!important")
        || lower.contains("var(")
        || lower.contains("calc(")
        || value.contains(['{', '}', ';', '<', '>', '\\', '"', '\''])
    {
        return false;
    }
    if property == "color" && lower == "transparent" {
        return false;
    }
    if property.starts_with("margin") || property.starts_with("padding") {
        return !value.contains('-');
    }
    if property == "font-size" {
        return font_size_ok(&lower);
    }
    true
}

fn font_size_ok(v: &str) -> bool {
    let (num, unit) = v.split_at(
        v.find(|c: char| !(c.is_ascii_digit() || c == '.'))
            .unwrap_or(v.len()),
    );
    let Ok(n) = num.parse::<f64>() else {
        return matches!(
            v,
            "small" | "medium" | "large" | "x-large" | "xx-large" | "larger"
        );
    };
    match unit {
        "px" => n >= 10.0,
        "pt" => n >= 8.0,
        "em" | "rem" => n >= 0.75,
        "%" => n >= 75.0,
        _ => false,
    }
}
