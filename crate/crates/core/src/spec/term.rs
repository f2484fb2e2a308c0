use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{Cause, Gender, LevelSets, StratumKey};
use crate::error::{Error, Result};

/// A categorical dimension usable as a model factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Factor {
    Age,
    Region,
    Deprivation,
}

impl Factor {
    pub fn as_str(self) -> &'static str {
        match self {
            Factor::Age => "age",
            Factor::Region => "region",
            Factor::Deprivation => "deprivation",
        }
    }

    pub fn n_levels(self, levels: &LevelSets) -> usize {
        match self {
            Factor::Age => levels.n_ages(),
            Factor::Region => levels.n_regions(),
            Factor::Deprivation => levels.n_quintiles(),
        }
    }

    pub fn level_of(self, key: &StratumKey) -> Option<usize> {
        match self {
            Factor::Age => key.age,
            Factor::Region => key.region,
            Factor::Deprivation => key.deprivation,
        }
    }

    pub fn level_label(self, levels: &LevelSets, level: usize) -> String {
        match self {
            Factor::Age => levels.age_label(Some(level)),
            Factor::Region => levels.region_label(Some(level)),
            Factor::Deprivation => format!("Q{}", level + 1),
        }
    }
}

impl FromStr for Factor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "age" | "age_group" => Ok(Factor::Age),
            "region" => Ok(Factor::Region),
            "deprivation" | "income" | "quintile" => Ok(Factor::Deprivation),
            other => Err(Error::InvalidSpec(format!("unknown factor `{other}`"))),
        }
    }
}

/// A numeric, standardised covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Covariate {
    Aad,
    Ns,
}

impl Covariate {
    pub fn as_str(self) -> &'static str {
        match self {
            Covariate::Aad => "AAD",
            Covariate::Ns => "NS",
        }
    }
}

impl FromStr for Covariate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "aad" => Ok(Covariate::Aad),
            "ns" | "smoking" => Ok(Covariate::Ns),
            other => Err(Error::InvalidSpec(format!("unknown covariate `{other}`"))),
        }
    }
}

/// One additive component of the location parameter.
///
/// Written as a label: `intercept`, `age`, `AAD`, `deprivation:age`,
/// `region:AAD`, `year`, `year:AAD`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Intercept,
    Main(Factor),
    Slope(Covariate),
    FactorInteraction(Factor, Factor),
    FactorSlope(Factor, Covariate),
    Period,
    PeriodSlope(Covariate),
}

/// How the free columns of a term are coded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    SumToZero,
    Corner,
    None,
}

impl Term {
    pub fn constraint(&self) -> Constraint {
        match self {
            Term::Intercept | Term::Slope(_) => Constraint::None,
            Term::Main(_) | Term::FactorInteraction(..) | Term::FactorSlope(..) => {
                Constraint::SumToZero
            }
            Term::Period | Term::PeriodSlope(_) => Constraint::Corner,
        }
    }

    pub fn is_period(&self) -> bool {
        matches!(self, Term::Period | Term::PeriodSlope(_))
    }

    pub fn is_main(&self) -> bool {
        matches!(self, Term::Main(_) | Term::Slope(_))
    }

    pub fn is_interaction(&self) -> bool {
        matches!(self, Term::FactorInteraction(..) | Term::FactorSlope(..) | Term::PeriodSlope(_))
    }

    pub fn factors(&self) -> Vec<Factor> {
        match *self {
            Term::Main(f) | Term::FactorSlope(f, _) => vec![f],
            Term::FactorInteraction(a, b) => vec![a, b],
            _ => Vec::new(),
        }
    }

    pub fn covariate(&self) -> Option<Covariate> {
        match *self {
            Term::Slope(c) | Term::FactorSlope(_, c) | Term::PeriodSlope(c) => Some(c),
            _ => None,
        }
    }

    /// The main-effect labels an interaction is built from.
    pub fn parents(&self) -> Vec<Term> {
        match *self {
            Term::FactorInteraction(a, b) => vec![Term::Main(a), Term::Main(b)],
            Term::FactorSlope(f, c) => vec![Term::Main(f), Term::Slope(c)],
            Term::PeriodSlope(c) => vec![Term::Period, Term::Slope(c)],
            _ => Vec::new(),
        }
    }

    fn same_as(&self, other: &Term) -> bool {
        match (self, other) {
            (Term::FactorInteraction(a, b), Term::FactorInteraction(c, d)) => {
                (a, b) == (c, d) || (a, b) == (d, c)
            }
            _ => self == other,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => f.write_str("intercept"),
            Term::Main(x) => f.write_str(x.as_str()),
            Term::Slope(c) => f.write_str(c.as_str()),
            Term::FactorInteraction(a, b) => write!(f, "{}:{}", a.as_str(), b.as_str()),
            Term::FactorSlope(a, c) => write!(f, "{}:{}", a.as_str(), c.as_str()),
            Term::Period => f.write_str("year"),
            Term::PeriodSlope(c) => write!(f, "year:{}", c.as_str()),
        }
    }
}

fn is_period_label(s: &str) -> bool {
    matches!(s.trim().to_ascii_lowercase().as_str(), "year" | "period" | "kappa")
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((a, b)) = s.split_once(':') {
            if is_period_label(a) {
                return Ok(Term::PeriodSlope(b.parse()?));
            }
            if is_period_label(b) {
                return Ok(Term::PeriodSlope(a.parse()?));
            }
            return match (a.parse::<Factor>(), b.parse::<Factor>()) {
                (Ok(fa), Ok(fb)) => Ok(Term::FactorInteraction(fa, fb)),
                (Ok(fa), Err(_)) => Ok(Term::FactorSlope(fa, b.parse()?)),
                (Err(_), Ok(fb)) => Ok(Term::FactorSlope(fb, a.parse()?)),
                (Err(_), Err(_)) => Err(Error::InvalidSpec(format!("unknown term `{s}`"))),
            };
        }
        if s.eq_ignore_ascii_case("intercept") {
            return Ok(Term::Intercept);
        }
        if is_period_label(s) {
            return Ok(Term::Period);
        }
        if let Ok(f) = s.parse::<Factor>() {
            return Ok(Term::Main(f));
        }
        s.parse::<Covariate>()
            .map(Term::Slope)
            .map_err(|_| Error::InvalidSpec(format!("unknown term `{s}`")))
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A named list of terms for one cause and gender.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub cause: Cause,
    pub gender: Gender,
    pub terms: Vec<Term>,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, cause: Cause, gender: Gender, terms: Vec<Term>) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            cause,
            gender,
            terms,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Structural checks that do not need a panel.
    pub fn validate(&self) -> Result<()> {
        let count = |pred: fn(&Term) -> bool| self.terms.iter().filter(|t| pred(t)).count();
        if count(|t| *t == Term::Intercept) != 1 {
            return Err(Error::InvalidSpec(format!("`{}` needs exactly one intercept", self.name)));
        }
        if count(|t| *t == Term::Period) != 1 {
            return Err(Error::InvalidSpec(format!("`{}` needs exactly one period term", self.name)));
        }
        for (i, t) in self.terms.iter().enumerate() {
            if let Term::FactorInteraction(a, b) = t {
                if a == b {
                    return Err(Error::InvalidSpec(format!("`{t}` interacts a factor with itself")));
                }
            }
            if self.terms[..i].iter().any(|u| u.same_as(t)) {
                return Err(Error::InvalidSpec(format!("duplicate term `{t}`")));
            }
        }
        Ok(())
    }

    /// Checks every factor against the panel's declared dimensions.
    pub fn check_levels(&self, levels: &LevelSets) -> Result<()> {
        if !levels.genders.contains(&self.gender) {
            return Err(Error::InvalidSpec(format!(
                "panel has no {} cells for `{}`",
                self.gender, self.name
            )));
        }
        for t in &self.terms {
            for f in t.factors() {
                if f.n_levels(levels) < 2 {
                    return Err(Error::InvalidSpec(format!(
                        "term `{t}` needs a {} dimension with at least two levels",
                        f.as_str()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, term: &Term) -> bool {
        self.terms.iter().any(|t| t.same_as(term))
    }

    pub fn with_term(&self, term: Term) -> Result<Self> {
        let mut terms = self.terms.clone();
        terms.push(term);
        Self::new(format!("{}+{}", self.name, term), self.cause, self.gender, terms)
    }

    pub fn covariates(&self) -> Vec<Covariate> {
        let mut c: Vec<Covariate> = self.terms.iter().filter_map(Term::covariate).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn uses(&self, cov: Covariate) -> bool {
        self.terms.iter().any(|t| t.covariate() == Some(cov))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: Self = toml::from_str(s).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("spec serialises")
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// A builtin name (`lung_female`, `lung_male`, `breast_female`) or a TOML file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if let Some((cause, gender)) = name_or_path.split_once('_') {
            if let (Ok(c), Ok(g)) = (cause.parse::<Cause>(), gender.parse::<Gender>()) {
                return builtin_spec(c, g);
            }
        }
        Self::load(name_or_path)
    }
}

/// The final model structures for lung (both genders) and female breast cancer.
pub fn builtin_spec(cause: Cause, gender: Gender) -> Result<ModelSpec> {
    use Covariate::*;
    use Factor::*;
    let terms = match (cause, gender) {
        (Cause::Lung, _) => {
            let mut t = vec![
                Term::Intercept,
                Term::Main(Age),
                Term::Main(Region),
                Term::Main(Deprivation),
                Term::Slope(Aad),
                Term::FactorInteraction(Deprivation, Age),
            ];
            if gender == Gender::Female {
                t.push(Term::FactorInteraction(Region, Age));
            }
            t.extend([
                Term::Period,
                Term::PeriodSlope(Aad),
                Term::FactorSlope(Region, Aad),
                Term::Slope(Ns),
            ]);
            t
        }
        (Cause::Breast, Gender::Female) => vec![
            Term::Intercept,
            Term::Main(Age),
            Term::Main(Region),
            Term::Slope(Ns),
            Term::Period,
        ],
        (Cause::Breast, Gender::Male) => {
            return Err(Error::NoBuiltinSpec {
                cause: cause.to_string(),
                gender: gender.to_string(),
            });
        }
    };
    ModelSpec::new(format!("{cause}_{gender}"), cause, gender, terms)
}
