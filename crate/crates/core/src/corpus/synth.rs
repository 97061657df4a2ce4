//! Template-generated pseudo-abstracts for desk-scale experiments.
//!
//! Positives come in three ambiguity levels: a direct event in an
//! identifiable patient, an event associated with a treated group, and an
//! event only implied by dose changes. Negatives are pharmacokinetic,
//! preclinical or efficacy-only abstracts, some of which borrow safety
//! vocabulary so the two classes overlap.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Article, CorpusError, Label, LabeledArticle};

pub const SYNTHETIC_SOURCE_PREFIX: &str = "synthetic/";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AmbiguityVariant {
    Direct,
    Associated,
    Implied,
}

impl AmbiguityVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            AmbiguityVariant::Direct => "direct",
            AmbiguityVariant::Associated => "associated",
            AmbiguityVariant::Implied => "implied",
        }
    }

    /// Recovers the variant from a synthetic article's `source` tag.
    pub fn from_source(source: &str) -> Option<Self> {
        match source.strip_prefix(SYNTHETIC_SOURCE_PREFIX)? {
            "direct" => Some(AmbiguityVariant::Direct),
            "associated" => Some(AmbiguityVariant::Associated),
            "implied" => Some(AmbiguityVariant::Implied),
            _ => None,
        }
    }
}

const DRUGS: &[&str] = &[
    "atorvastatin", "metformin", "amiodarone", "cisplatin", "vitamin D", "warfarin", "lisinopril",
    "methotrexate", "infliximab", "pembrolizumab", "levetiracetam", "sertraline", "clozapine",
    "allopurinol", "carbamazepine", "rivaroxaban", "tacrolimus", "paclitaxel", "isotretinoin",
    "lamotrigine", "ciprofloxacin", "valproate", "denosumab", "nivolumab", "hydroxychloroquine",
    "empagliflozin", "semaglutide", "tamoxifen", "azathioprine", "linezolid",
];

const EVENTS: &[&str] = &[
    "hypercalcemia", "peripheral neuropathy", "hepatotoxicity", "a maculopapular rash",
    "QT interval prolongation", "acute kidney injury", "febrile neutropenia", "anaphylaxis",
    "rhabdomyolysis", "Stevens-Johnson syndrome", "interstitial pneumonitis", "agranulocytosis",
    "hyponatremia", "lactic acidosis", "severe hypoglycemia", "drug-induced lupus",
    "pancreatitis", "thrombocytopenia", "angioedema", "tendon rupture", "myocarditis",
    "cholestatic jaundice", "seizures", "colitis",
];

const CONDITIONS: &[&str] = &[
    "type 2 diabetes", "hypertension", "metastatic breast cancer", "rheumatoid arthritis",
    "atrial fibrillation", "epilepsy", "major depressive disorder", "schizophrenia", "gout",
    "chronic kidney disease", "non-small cell lung cancer", "Crohn's disease", "osteoporosis",
    "psoriasis", "heart failure", "community-acquired pneumonia",
];

const PERSONS: &[&str] = &["woman", "man", "male patient", "female patient", "boy", "girl", "patient"];

const DESIGNS: &[&str] = &[
    "retrospective cohort study", "randomized controlled trial", "prospective observational study",
    "multicentre open-label study", "post hoc analysis", "single-centre case series",
];

const MEASURES: &[&str] = &[
    "glycated haemoglobin", "systolic blood pressure", "progression-free survival", "disease activity score",
    "seizure frequency", "bone mineral density", "LDL cholesterol", "overall response rate",
];

const CELLS: &[&str] = &["HepG2", "MCF-7", "A549", "HEK293", "Caco-2", "primary human hepatocyte"];

const CATEGORIES: &[&str] = &["therapeutic_class", "surveillance_list", "adverse_terms"];

const NUMBER_WORDS: &[&str] = &[
    "Two", "Three", "Four", "Five", "Six", "Seven", "Eight", "Nine", "Ten", "Twelve", "Fifteen",
    "Eighteen", "Twenty", "Twenty-two", "Thirty-one",
];

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
}

impl Gen<'_> {
    fn pick<'b>(&mut self, xs: &'b [&'b str]) -> &'b str {
        xs.choose(self.rng).expect("non-empty list")
    }

    fn num(&mut self, lo: u32, hi: u32) -> u32 {
        self.rng.gen_range(lo..=hi)
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    fn background(&mut self, drug: &str, condition: &str) -> String {
        match self.num(0, 4) {
            0 => format!("{} is widely used in the treatment of {}.", cap(drug), condition),
            1 => format!("The safety profile of {drug} in routine practice remains incompletely characterized."),
            2 => format!("Little is known about the use of {drug} in older adults with {condition}."),
            3 => format!("{} remains a leading cause of morbidity, and treatment options are limited.", cap(condition)),
            _ => format!("{} was approved for {} on the basis of pivotal trials.", cap(drug), condition),
        }
    }

    /// Titles shared by clinical-study abstracts of either label.
    fn study_title(&mut self, drug: &str, condition: &str) -> String {
        match self.num(0, 4) {
            0 => format!("Safety and efficacy of {drug} in patients with {condition}"),
            1 => format!("{} in {}: results of a {}", cap(drug), condition, self.pick(DESIGNS)),
            2 => format!("Outcomes of {drug} therapy for {condition}"),
            3 => format!("{} for {}: a {}", cap(drug), condition, self.pick(DESIGNS)),
            _ => format!("Efficacy of {drug} in {condition}"),
        }
    }

    fn methods(&mut self, drug: &str, condition: &str) -> String {
        let design = self.pick(DESIGNS);
        match self.num(0, 2) {
            0 => format!("We conducted a {design} to evaluate {drug} in patients with {condition}."),
            1 => format!(
                "A total of {} patients with {} were enrolled in a {} of {}.",
                self.num(24, 900),
                condition,
                design,
                drug
            ),
            _ => format!("Data were extracted from electronic health records of patients treated with {drug}."),
        }
    }

    fn efficacy(&mut self, drug: &str) -> String {
        let measure = self.pick(MEASURES);
        match self.num(0, 3) {
            0 => format!("The primary endpoint was change in {measure} at week {}.", self.num(8, 52)),
            1 => format!(
                "{} significantly improved {} compared with placebo (p = 0.0{}).",
                cap(drug),
                measure,
                self.num(1, 4)
            ),
            2 => format!("Response rates were {}% and {}% in the two arms.", self.num(20, 70), self.num(10, 50)),
            _ => format!("Median follow-up was {} months.", self.num(6, 60)),
        }
    }

    fn conclusion(&mut self, drug: &str) -> String {
        match self.num(0, 3) {
            0 => format!("These findings support further evaluation of {drug}."),
            1 => "Larger studies are warranted to confirm these results.".to_string(),
            2 => format!("Clinicians should be aware of this association when prescribing {drug}."),
            _ => "Further research is needed.".to_string(),
        }
    }

    fn direct_event(&mut self, drug: &str, event: &str) -> String {
        let age = self.num(2, 91);
        let person = self.pick(PERSONS);
        match self.num(0, 3) {
            0 => format!("A {age}-year-old {person} developed {event} while on {drug}."),
            1 => format!("We report a case of {event} in a {age}-year-old {person} treated with {drug}."),
            2 => format!(
                "A {age}-year-old {person} presented with {event} {} days after starting {drug}.",
                self.num(2, 40)
            ),
            _ => {
                let word = self.pick(NUMBER_WORDS).to_lowercase();
                format!("We describe a {word}-year-old {person} who experienced {event} during {drug} therapy.")
            }
        }
    }

    fn direct_followup(&mut self, drug: &str) -> String {
        match self.num(0, 3) {
            0 => format!("Symptoms resolved after discontinuation of {drug}."),
            1 => "The patient recovered after supportive care.".to_string(),
            2 => "Rechallenge was not attempted.".to_string(),
            _ => "Laboratory values normalized within two weeks.".to_string(),
        }
    }

    fn associated_event(&mut self, drug: &str, event: &str) -> String {
        let count = self.pick(NUMBER_WORDS);
        match self.num(0, 3) {
            0 => format!(
                "{count} patients experienced {event}, and {} had severe {event}.",
                self.pick(NUMBER_WORDS).to_lowercase()
            ),
            1 => format!("{} was reported in {}% of patients receiving {}.", cap(event), self.num(2, 30), drug),
            2 => format!(
                "Grade 3 {} occurred in {} of {} participants.",
                event,
                self.num(2, 20),
                self.num(40, 400)
            ),
            _ => format!("Treatment-emergent {event} was more frequent with {drug} than with placebo."),
        }
    }

    /// Tolerability sentences that read the same in adverse and efficacy-only
    /// abstracts; only the surrounding article decides the label.
    fn shared_tolerability(&mut self) -> String {
        match self.num(0, 2) {
            0 => format!("Dose modifications were necessary in {}% of cycles.", self.num(5, 45)),
            1 => format!("Treatment was interrupted in {} patients.", self.num(2, 30)),
            _ => format!("{} patients switched to an alternative agent.", self.pick(NUMBER_WORDS)),
        }
    }

    fn implied_event(&mut self, drug: &str) -> String {
        if self.chance(0.5) {
            return self.shared_tolerability();
        }
        match self.num(0, 2) {
            0 => format!(
                "Although dose reduction was required in {}% of the patients, no adverse event that led to the discontinuation of treatment was observed.",
                self.num(5, 40)
            ),
            1 => format!("Treatment with {drug} was interrupted in {} patients because of laboratory abnormalities.", self.num(2, 30)),
            _ => format!("{} patients switched from {} to an alternative agent because of tolerability concerns.", self.pick(NUMBER_WORDS), drug),
        }
    }

    fn pk(&mut self, drug: &str) -> Vec<String> {
        let mut s = vec![
            format!("The pharmacokinetics of {drug} were characterized in {} healthy volunteers aged 18 to 45 years.", self.num(12, 60)),
            format!("Maximum plasma concentration was reached after {} hours.", self.num(1, 8)),
            format!("The elimination half-life was {}.{} hours.", self.num(2, 40), self.num(0, 9)),
        ];
        if self.chance(0.5) {
            s.push("Exposure increased proportionally with dose.".into());
        }
        if self.chance(0.3) {
            s.push(format!("Co-administration with food reduced the bioavailability of {drug}."));
        }
        s
    }

    fn preclinical(&mut self, drug: &str) -> Vec<String> {
        let mut s = vec![
            format!("{} inhibited proliferation of {} cells in vitro.", cap(drug), self.pick(CELLS)),
            format!("The IC50 was {}.{} µM.", self.num(1, 90), self.num(0, 9)),
        ];
        if self.chance(0.6) {
            s.push(format!("Mice were dosed at {} mg/kg for {} days.", self.num(1, 100), self.num(5, 90)));
        }
        if self.chance(0.12) {
            s.push(format!(
                "{}-week-old male mice received {} by oral gavage.",
                self.pick(&["Six", "Eight", "Ten", "Twelve"]),
                drug
            ));
        }
        if self.chance(0.3) {
            s.push("Mechanistic studies suggested inhibition of mitochondrial respiration.".into());
        }
        s
    }

    /// Sentences a negative may borrow from safety reporting without
    /// describing an event.
    fn safety_mention(&mut self, drug: &str) -> String {
        match self.num(0, 4) {
            0 => "Adverse events were not assessed in this analysis.".to_string(),
            1 => "Safety outcomes will be reported separately.".to_string(),
            2 => format!("{} was generally well tolerated.", cap(drug)),
            3 => "No patients discontinued treatment.".to_string(),
            _ => format!("Hepatotoxicity assays showed no signal for {drug} at therapeutic concentrations."),
        }
    }
}

fn cap(s: &str) -> String {
    let mut cs = s.chars();
    match cs.next() {
        Some(c) => c.to_uppercase().collect::<String>() + cs.as_str(),
        None => String::new(),
    }
}

fn positive_article(g: &mut Gen<'_>, variant: AmbiguityVariant) -> (String, Vec<String>) {
    let drug = g.pick(DRUGS);
    let event = g.pick(EVENTS);
    let condition = g.pick(CONDITIONS);
    let mut sents = Vec::new();
    let title = match variant {
        AmbiguityVariant::Direct => {
            if g.chance(0.4) {
                sents.push(g.background(drug, condition));
            }
            sents.push(g.direct_event(drug, event));
            for _ in 0..g.num(0, 2) {
                sents.push(g.direct_followup(drug));
            }
            if g.chance(0.5) {
                sents.push(g.conclusion(drug));
            }
            format!("{} associated with {}: a case report", cap(event), drug)
        }
        AmbiguityVariant::Associated => {
            sents.push(g.background(drug, condition));
            sents.push(g.methods(drug, condition));
            if g.chance(0.6) {
                sents.push(g.efficacy(drug));
            }
            sents.push(g.associated_event(drug, event));
            if g.chance(0.5) {
                sents.push(g.conclusion(drug));
            }
            g.study_title(drug, condition)
        }
        AmbiguityVariant::Implied => {
            sents.push(g.background(drug, condition));
            sents.push(g.methods(drug, condition));
            sents.push(g.efficacy(drug));
            sents.push(g.implied_event(drug));
            if g.chance(0.5) {
                sents.push(g.efficacy(drug));
            }
            if g.chance(0.5) {
                sents.push(g.conclusion(drug));
            }
            g.study_title(drug, condition)
        }
    };
    (title, sents)
}

fn negative_article(g: &mut Gen<'_>) -> (String, Vec<String>) {
    let drug = g.pick(DRUGS);
    let condition = g.pick(CONDITIONS);
    let mut sents = Vec::new();
    let title = match g.num(0, 2) {
        0 => {
            sents.extend(g.pk(drug));
            format!("Pharmacokinetics of {drug} in healthy volunteers")
        }
        1 => {
            if g.chance(0.5) {
                sents.push(g.background(drug, condition));
            }
            sents.extend(g.preclinical(drug));
            format!("Preclinical characterization of {drug}")
        }
        _ => {
            sents.push(g.background(drug, condition));
            sents.push(g.methods(drug, condition));
            sents.push(g.efficacy(drug));
            if g.chance(0.35) {
                sents.push(g.shared_tolerability());
            }
            if g.chance(0.5) {
                sents.push(g.efficacy(drug));
            }
            g.study_title(drug, condition)
        }
    };
    if g.chance(0.35) {
        let at = g.num(1, sents.len() as u32) as usize;
        let s = g.safety_mention(drug);
        sents.insert(at, s);
    }
    if g.chance(0.5) {
        sents.push(g.conclusion(drug));
    }
    (title, sents)
}

/// Generates `size` labeled pseudo-abstracts of which exactly
/// `round(size * positive_rate)` are suspect adverse.
pub fn generate_synthetic_corpus(size: usize, positive_rate: f64, seed: u64) -> Result<Vec<LabeledArticle>, CorpusError> {
    if size < 10 {
        return Err(CorpusError::InvalidParameter(format!("size must be at least 10, got {size}")));
    }
    if !(positive_rate > 0.0 && positive_rate < 1.0) {
        return Err(CorpusError::InvalidParameter(format!(
            "positive_rate must be in (0,1), got {positive_rate}"
        )));
    }
    let n_pos = ((size as f64) * positive_rate).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<bool> = (0..size).map(|i| i < n_pos).collect();
    labels.shuffle(&mut rng);

    // the three ambiguity levels are cycled so every level is present
    let variants = [AmbiguityVariant::Direct, AmbiguityVariant::Associated, AmbiguityVariant::Implied];
    let mut pos_seen = 0usize;
    let mut out = Vec::with_capacity(size);
    let mut g = Gen { rng: &mut rng };
    for (i, positive) in labels.into_iter().enumerate() {
        let (title, sents, source) = if positive {
            let variant = variants[pos_seen % variants.len()];
            pos_seen += 1;
            let (t, s) = positive_article(&mut g, variant);
            (t, s, format!("{SYNTHETIC_SOURCE_PREFIX}{}", variant.as_str()))
        } else {
            let (t, s) = negative_article(&mut g);
            (t, s, format!("{SYNTHETIC_SOURCE_PREFIX}negative"))
        };
        let category = g.pick(CATEGORIES).to_string();
        let mut article = Article::new(format!("SYN-{:05}", i + 1), title, sents.join(" "));
        article.source = Some(source);
        let mut item = LabeledArticle::new(article, Label::from_positive(positive), "synthetic");
        item.category = Some(category);
        out.push(item);
    }
    Ok(out)
}
