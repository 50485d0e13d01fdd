/// The 18 input labs: LOINC code and name.
pub const LAB_PANEL: [(&str, &str); 18] = [
    ("2160-0", "Creatinine"),
    ("3094-0", "Urea nitrogen"),
    ("2823-3", "Potassium"),
    ("2345-7", "Glucose"),
    ("1742-6", "Alanine aminotransferase"),
    ("1920-8", "Aspartate aminotransferase"),
    ("2885-2", "Protein"),
    ("1751-7", "Albumin"),
    ("2093-3", "Cholesterol"),
    ("2571-8", "Triglyceride"),
    ("13457-7", "Cholesterol.in LDL"),
    ("17861-6", "Calcium"),
    ("2951-2", "Sodium"),
    ("2075-0", "Chloride"),
    ("2028-9", "Carbon dioxide"),
    ("3097-3", "Urea nitrogen/Creatinine"),
    ("1975-2", "Bilirubin"),
    ("1759-0", "Albumin/Globulin"),
];

/// Codes of the first `n` panel labs; beyond the panel, `LAB<i>`.
pub fn lab_codes(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            LAB_PANEL
                .get(i)
                .map(|p| p.0.to_string())
                .unwrap_or_else(|| format!("LAB{i}"))
        })
        .collect()
}

/// Human-readable name for a lab code, `"Name(code)"` for panel labs.
pub fn lab_label(code: &str) -> String {
    match LAB_PANEL.iter().find(|p| p.0 == code) {
        Some((c, name)) => format!("{name}({c})"),
        None => code.to_string(),
    }
}
