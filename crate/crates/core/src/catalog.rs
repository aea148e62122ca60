//! Census-aligned value catalogs for tabular persona fields.

use indexmap::IndexMap;

pub const ANCESTRY: &[&str] = &[
    "British",
    "Irish",
    "German",
    "Italian",
    "Polish",
    "French",
    "Norwegian",
    "Dutch",
    "Swedish",
    "Russian",
    "Chinese",
    "Filipino",
    "Asian Indian",
    "Vietnamese",
    "Korean",
    "Japanese",
    "Mexican",
    "Puerto Rican",
    "Cuban",
    "African American",
    "West Indian",
    "Arab",
    "American Indian",
];

pub const HOUSEHOLD_LANGUAGE: &[&str] = &[
    "English",
    "Spanish",
    "Other Indo-European",
    "Asian/Pacific Islander languages",
    "Other",
];

pub const EDUCATION: &[&str] = &[
    "Less than HS",
    "HS Graduate",
    "Some College",
    "Bachelor's",
    "Graduate Degree",
];

pub const EMPLOYMENT_STATUS: &[&str] = &["Employed", "Unemployed", "Not in Labor Force"];

pub const CLASS_OF_WORKER: &[&str] = &["Private", "Government", "Self-employed", "Unpaid family worker"];

/// Industry categories with the occupation categories nested under each.
pub const OCCUPATIONS_BY_INDUSTRY: &[(&str, &[&str])] = &[
    (
        "Management, business, science, and arts occupations",
        &[
            "Management, business, and financial occupations",
            "Computer, engineering, and science occupations",
            "Education, legal, community service, arts, and media occupations",
            "Healthcare practitioner and technical occupations",
        ],
    ),
    (
        "Service occupations",
        &[
            "Healthcare support occupations",
            "Protective service occupations",
            "Food preparation and serving related occupations",
            "Building and grounds cleaning and maintenance occupations",
            "Personal care and service occupations",
        ],
    ),
    (
        "Sales and office occupations",
        &["Sales and related occupations", "Office and administrative support occupations"],
    ),
    (
        "Natural resources, construction, and maintenance occupations",
        &[
            "Farming, fishing, and forestry occupations",
            "Construction and extraction occupations",
            "Installation, maintenance, and repair occupations",
        ],
    ),
    (
        "Production, transportation, and material moving occupations",
        &[
            "Production occupations",
            "Transportation occupations",
            "Material moving occupations",
        ],
    ),
];

pub const INCOME_MIN: i64 = 0;
pub const INCOME_MAX: i64 = 1_000_000;

pub const MARITAL_STATUS: &[&str] = &["Never Married", "Married", "Divorced", "Widowed", "Separated"];

pub const HOUSEHOLD_TYPE: &[&str] = &["Family", "Non-family"];

pub const VETERAN_STATUS: &[&str] = &["Veteran", "Non-veteran"];

pub const DISABILITY: &[&str] = &["None", "Physical", "Mental", "Both"];

pub const HEALTH_INSURANCE: &[&str] = &["Private", "Public", "None"];

pub const IDEOLOGY: &[&str] = &[
    "Very Liberal",
    "Liberal",
    "Moderate",
    "Conservative",
    "Very Conservative",
];

pub const POLITICAL_VIEWS: &[&str] = &["Democrat", "Republican", "Independent", "Other"];

/// Valid US-born PLACE_OF_BIRTH values.
pub const US_BIRTHPLACES: &[&str] = &[
    "Alabama", "Alaska", "Arizona", "Arkansas", "California", "Colorado", "Connecticut",
    "Delaware", "Florida", "Georgia", "Hawaii", "Idaho", "Illinois", "Indiana", "Iowa", "Kansas",
    "Kentucky", "Louisiana", "Maine", "Maryland", "Massachusetts", "Michigan", "Minnesota",
    "Mississippi", "Missouri", "Montana", "Nebraska", "Nevada", "New Hampshire", "New Jersey",
    "New Mexico", "New York", "North Carolina", "North Dakota", "Ohio", "Oklahoma", "Oregon",
    "Pennsylvania", "Rhode Island", "South Carolina", "South Dakota", "Tennessee", "Texas", "Utah",
    "Vermont", "Virginia", "Washington", "West Virginia", "Wisconsin", "Wyoming",
    "District of Columbia",
];

pub const BIG_FIVE_TRAITS: [&str; 5] = [
    "OPENNESS",
    "CONSCIENTIOUSNESS",
    "EXTRAVERSION",
    "AGREEABLENESS",
    "NEUROTICISM",
];

/// Qualitative Big Five labels and the numeric score each maps to.
pub const BIG_FIVE_LABELS: [(&str, f64); 3] = [("Low", 25.0), ("Medium", 50.0), ("High", 75.0)];

/// Allowed values per catalog-constrained field.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueCatalog {
    lists: IndexMap<String, Vec<String>>,
    occupations: IndexMap<String, Vec<String>>,
    income: (i64, i64),
    birthplaces: Vec<String>,
}

impl Default for ValueCatalog {
    fn default() -> Self {
        Self::census()
    }
}

impl ValueCatalog {
    /// The census category catalog used by the generation prompts.
    pub fn census() -> Self {
        let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let mut lists = IndexMap::new();
        for (name, values) in [
            ("ANCESTRY", ANCESTRY),
            ("HOUSEHOLD_LANGUAGE", HOUSEHOLD_LANGUAGE),
            ("EDUCATION", EDUCATION),
            ("EMPLOYMENT_STATUS", EMPLOYMENT_STATUS),
            ("CLASS_OF_WORKER", CLASS_OF_WORKER),
            ("MARITAL_STATUS", MARITAL_STATUS),
            ("HOUSEHOLD_TYPE", HOUSEHOLD_TYPE),
            ("VETERAN_STATUS", VETERAN_STATUS),
            ("DISABILITY", DISABILITY),
            ("HEALTH_INSURANCE", HEALTH_INSURANCE),
            ("IDEOLOGY", IDEOLOGY),
            ("POLITICAL_VIEWS", POLITICAL_VIEWS),
        ] {
            lists.insert(name.to_string(), owned(values));
        }
        let occupations = OCCUPATIONS_BY_INDUSTRY
            .iter()
            .map(|(ind, occ)| (ind.to_string(), owned(occ)))
            .collect();
        Self {
            lists,
            occupations,
            income: (INCOME_MIN, INCOME_MAX),
            birthplaces: owned(US_BIRTHPLACES),
        }
    }

    /// Allowed values of a flat catalog field, or `None` if the field is not
    /// a flat list (industry and occupation are handled separately).
    pub fn allowed(&self, field: &str) -> Option<&[String]> {
        self.lists.get(field).map(Vec::as_slice)
    }

    pub fn industries(&self) -> impl Iterator<Item = &str> {
        self.occupations.keys().map(String::as_str)
    }

    pub fn occupations_in(&self, industry: &str) -> Option<&[String]> {
        self.occupations.get(industry).map(Vec::as_slice)
    }

    /// Industry an occupation is nested under.
    pub fn industry_of(&self, occupation: &str) -> Option<&str> {
        self.occupations
            .iter()
            .find(|(_, occ)| occ.iter().any(|o| o == occupation))
            .map(|(ind, _)| ind.as_str())
    }

    pub fn income_range(&self) -> (i64, i64) {
        self.income
    }

    pub fn is_us_birthplace(&self, value: &str) -> bool {
        self.birthplaces.iter().any(|b| b == value)
    }
}

/// Parses an INCOME value: an integer, optionally with a leading `$` and
/// thousands separators (`$55,000`).
pub fn parse_income(value: &str) -> Option<i64> {
    let trimmed = value.trim();
    let trimmed = trimmed.strip_prefix('$').unwrap_or(trimmed).trim();
    if trimmed.is_empty() {
        return None;
    }
    let digits: String = trimmed.chars().filter(|&c| c != ',').collect();
    let (neg, digits) = match digits.strip_prefix('-') {
        Some(rest) => (true, rest.to_string()),
        None => (false, digits),
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let v: i64 = digits.parse().ok()?;
    Some(if neg { -v } else { v })
}

/// Numeric Big Five score: 0–100 numbers pass through, Low/Medium/High map to
/// 25/50/75.
pub fn big_five_score(value: &str) -> Option<f64> {
    let v = value.trim();
    if let Some((_, score)) = BIG_FIVE_LABELS.iter().find(|(l, _)| l.eq_ignore_ascii_case(v)) {
        return Some(*score);
    }
    let n: f64 = v.parse().ok()?;
    (n.is_finite() && (0.0..=100.0).contains(&n)).then_some(n)
}

/// Whether a CITIZENSHIP value describes someone born abroad.
pub fn indicates_foreign_birth(citizenship: &str) -> bool {
    let c = citizenship.to_ascii_lowercase();
    ["naturaliz", "not a citizen", "not a u.s. citizen", "non-citizen", "noncitizen", "foreign", "immigrant"]
        .iter()
        .any(|k| c.contains(k))
}
