//! Claim-level data model, CSV ingestion, and exact population moments.
//!
//! Amounts are stored as integer cents so that parsing and serialization are
//! lossless and moment computation starts from exact integer sums. Moments
//! themselves are reported in dollars as `f64`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::{Error, Result};

/// One billed procedure within a claim.
///
/// Invariants: `claimed_cents >= 0` and `0 <= probable_error_cents <= claimed_cents`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineItem {
    pub claimed_cents: i64,
    pub probable_error_cents: i64,
}

/// One reimbursement request, made of at least one line item.
///
/// The claim total must be positive: a claim with nothing billed cannot be
/// audited for overpayment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Claim {
    pub id: String,
    pub lines: Vec<LineItem>,
}

impl Claim {
    /// Claim total in cents (sum of line claimed amounts).
    pub fn total_cents(&self) -> i64 {
        self.lines.iter().map(|l| l.claimed_cents).sum()
    }

    /// Claim-level probable error total in cents.
    pub fn probable_error_cents(&self) -> i64 {
        self.lines.iter().map(|l| l.probable_error_cents).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.lines.is_empty() {
            return Err(Error::InvalidClaim {
                claim_id: self.id.clone(),
                message: "claim has no line items".into(),
            });
        }
        for (j, line) in self.lines.iter().enumerate() {
            if line.claimed_cents < 0 {
                return Err(Error::InvalidClaim {
                    claim_id: self.id.clone(),
                    message: format!("line {}: negative claimed amount", j + 1),
                });
            }
            if line.probable_error_cents < 0 || line.probable_error_cents > line.claimed_cents {
                return Err(Error::InvalidClaim {
                    claim_id: self.id.clone(),
                    message: format!("line {}: probable error outside [0, claimed amount]", j + 1),
                });
            }
        }
        if self.total_cents() <= 0 {
            return Err(Error::InvalidClaim {
                claim_id: self.id.clone(),
                message: "claim total must be positive".into(),
            });
        }
        Ok(())
    }
}

/// The audited universe: every claim with its known claimed amounts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimPopulation {
    claims: Vec<Claim>,
}

impl ClaimPopulation {
    /// Validates claim invariants (nonempty population, unique ids, line
    /// amount bounds, positive totals) and wraps the claims.
    pub fn new(claims: Vec<Claim>) -> Result<Self> {
        if claims.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        let mut seen = HashMap::with_capacity(claims.len());
        for claim in &claims {
            claim.validate()?;
            if seen.insert(claim.id.clone(), ()).is_some() {
                return Err(Error::InvalidClaim {
                    claim_id: claim.id.clone(),
                    message: "duplicate claim id".into(),
                });
            }
        }
        Ok(Self { claims })
    }

    pub fn claims(&self) -> &[Claim] {
        &self.claims
    }

    pub fn len(&self) -> usize {
        self.claims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.claims.is_empty()
    }

    /// Claim totals in cents, in claim order.
    pub fn totals_cents(&self) -> Vec<i64> {
        self.claims.iter().map(|c| c.total_cents()).collect()
    }

    /// Total line-item count across all claims.
    pub fn line_count(&self) -> usize {
        self.claims.iter().map(|c| c.lines.len()).sum()
    }
}

/// Population moments of the claimed amounts, in dollars.
///
/// `sigma2_x` and `g1_skew` use the 1/N population convention. `g1_skew` is
/// defined as 0 for a constant population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationMoments {
    /// N, number of claims.
    pub n_pop: usize,
    /// Mean claim total.
    pub mu_x: f64,
    /// Population variance of claim totals.
    pub sigma2_x: f64,
    /// Second raw moment (1/N)*sum(X_i^2).
    pub mu_x2: f64,
    /// Sum of claim totals.
    pub tau_x: f64,
    /// Sum of squared claim totals.
    pub tau_x2: f64,
    /// Standardized third central moment; 0 when sigma2_x = 0.
    pub g1_skew: f64,
    /// Sum over claims of the squared claim-level probable error totals.
    pub sum_xt_sq: f64,
    /// Sum over all lines of squared line-level probable error amounts.
    pub sum_line_xt_sq: f64,
}

const CENTS: f64 = 100.0;

/// Exact integer sums over a set of claims, the common ground for every
/// moment and coefficient computation. All values are in cents (or cents^2,
/// cents^3) and exact: the largest magnitude, sum of cubed totals, stays far
/// inside i128 range for any realistic claims file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct ClaimSums {
    pub n: i128,
    /// sum X_i
    pub s1: i128,
    /// sum X_i^2
    pub s2: i128,
    /// sum X_i^3
    pub s3: i128,
    /// sum Xt_i
    pub t1: i128,
    /// sum Xt_i^2
    pub t2: i128,
    /// sum X_i * Xt_i
    pub p11: i128,
    /// sum over lines of Xt_ij^2
    pub l2: i128,
    /// sum X_i^2 * Xt_i
    pub x2t: i128,
    /// sum X_i * Xt_i^2
    pub xt2: i128,
    /// sum X_i * (sum over lines of Xt_ij^2)
    pub xl2: i128,
}

impl ClaimSums {
    pub fn add_claim(&mut self, claim: &Claim) {
        let x = claim.total_cents() as i128;
        let xt = claim.probable_error_cents() as i128;
        self.n += 1;
        self.s1 += x;
        self.s2 += x * x;
        self.s3 += x * x * x;
        self.t1 += xt;
        self.t2 += xt * xt;
        self.p11 += x * xt;
        let mut lines_sq = 0i128;
        for line in &claim.lines {
            let v = line.probable_error_cents as i128;
            lines_sq += v * v;
        }
        self.l2 += lines_sq;
        self.x2t += x * x * xt;
        self.xt2 += x * xt * xt;
        self.xl2 += x * lines_sq;
    }

    /// Componentwise difference; with cumulative sums over a sorted claim
    /// list this yields the exact sums of any contiguous stratum.
    pub fn minus(&self, other: &ClaimSums) -> ClaimSums {
        ClaimSums {
            n: self.n - other.n,
            s1: self.s1 - other.s1,
            s2: self.s2 - other.s2,
            s3: self.s3 - other.s3,
            t1: self.t1 - other.t1,
            t2: self.t2 - other.t2,
            p11: self.p11 - other.p11,
            l2: self.l2 - other.l2,
            x2t: self.x2t - other.x2t,
            xt2: self.xt2 - other.xt2,
            xl2: self.xl2 - other.xl2,
        }
    }

    pub fn from_claims(claims: &[Claim]) -> Self {
        let mut sums = Self::default();
        for claim in claims {
            sums.add_claim(claim);
        }
        sums
    }

    pub fn moments(&self, third_central_cents: f64) -> PopulationMoments {
        let n = self.n as f64;
        let mu_c = self.s1 as f64 / n;
        let mu2_c = self.s2 as f64 / n;
        // sigma^2 as mu2 - mu^2 keeps the defining identity exact; the tiny
        // negative residue possible for near-constant data is clamped away.
        let sigma2_c = (mu2_c - mu_c * mu_c).max(0.0);
        let g1 = if sigma2_c > 0.0 {
            third_central_cents / (n * sigma2_c.powf(1.5))
        } else {
            0.0
        };
        PopulationMoments {
            n_pop: self.n as usize,
            mu_x: mu_c / CENTS,
            sigma2_x: sigma2_c / (CENTS * CENTS),
            mu_x2: mu2_c / (CENTS * CENTS),
            tau_x: self.s1 as f64 / CENTS,
            tau_x2: self.s2 as f64 / (CENTS * CENTS),
            g1_skew: g1,
            sum_xt_sq: self.t2 as f64 / (CENTS * CENTS),
            sum_line_xt_sq: self.l2 as f64 / (CENTS * CENTS),
        }
    }
}

/// Computes the exact population moments of the claim totals.
pub fn compute_moments(pop: &ClaimPopulation) -> PopulationMoments {
    let sums = ClaimSums::from_claims(pop.claims());
    // Third central moment needs the mean first; a second pass over the
    // centered totals avoids the cancellation of the raw-moment expansion.
    let mu_c = sums.s1 as f64 / sums.n as f64;
    let mut m3 = 0.0;
    for claim in pop.claims() {
        let d = claim.total_cents() as f64 - mu_c;
        m3 += d * d * d;
    }
    sums.moments(m3)
}

/// One distinct claim-total value with its multiplicity and selection
/// coefficient c = X (X - mu - sigma^2/(2 mu)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueGroup {
    /// Distinct claim total in dollars.
    pub value: f64,
    /// Distinct claim total in cents (exact grouping key).
    pub value_cents: i64,
    /// Number of claims with this total.
    pub count: usize,
    /// Selection coefficient for the estimator comparison criterion.
    pub c_value: f64,
}

/// The distinct claim totals of a population, ascending, with counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DistinctValueGroups {
    pub groups: Vec<ValueGroup>,
}

impl DistinctValueGroups {
    /// Smallest group size, the sample-size diagnostic for the normal
    /// approximation of the estimator-selection criterion.
    pub fn min_count(&self) -> usize {
        self.groups.iter().map(|g| g.count).min().unwrap_or(0)
    }

    /// Sum over claims of c_i^2, i.e. sum over groups of N_l * c_l^2.
    pub fn sum_c_sq(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.count as f64 * g.c_value * g.c_value)
            .sum()
    }
}

/// Groups claims by their exact total and attaches the selection coefficient
/// c_l to each distinct value. Errors if the mean claim total is zero, which
/// cannot happen for a validated population but guards direct misuse.
pub fn distinct_value_groups(pop: &ClaimPopulation) -> Result<DistinctValueGroups> {
    let m = compute_moments(pop);
    if m.mu_x <= 0.0 {
        return Err(Error::ZeroMeanClaims);
    }
    let shift = m.mu_x + m.sigma2_x / (2.0 * m.mu_x);
    let mut counts: HashMap<i64, usize> = HashMap::new();
    for claim in pop.claims() {
        *counts.entry(claim.total_cents()).or_insert(0) += 1;
    }
    let mut keys: Vec<i64> = counts.keys().copied().collect();
    keys.sort_unstable();
    let groups = keys
        .into_iter()
        .map(|cents| {
            let value = cents as f64 / CENTS;
            ValueGroup {
                value,
                value_cents: cents,
                count: counts[&cents],
                c_value: value * (value - shift),
            }
        })
        .collect();
    Ok(DistinctValueGroups { groups })
}

pub const CSV_HEADER: &str = "claim_id,line_index,claimed_amount,probable_error_amount";

/// Parses a decimal dollar amount with exactly two fraction digits into cents.
pub fn parse_amount_cents(text: &str) -> std::result::Result<i64, String> {
    let bad = || format!("amount {text:?} must be a decimal with two fraction digits");
    let (whole, frac) = text.split_once('.').ok_or_else(bad)?;
    if whole.is_empty()
        || frac.len() != 2
        || !whole.bytes().all(|b| b.is_ascii_digit() || b == b'-')
        || !frac.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(bad());
    }
    if whole.starts_with('-') {
        return Err(format!("amount {text:?} is negative"));
    }
    let dollars: i64 = whole.parse().map_err(|_| bad())?;
    let cents: i64 = frac.parse().map_err(|_| bad())?;
    Ok(dollars * 100 + cents)
}

/// Formats cents as a dollar amount with two fraction digits.
pub fn format_cents(cents: i64) -> String {
    let sign = if cents < 0 { "-" } else { "" };
    let a = cents.unsigned_abs();
    format!("{sign}{}.{:02}", a / 100, a % 100)
}

/// Reads a claims CSV from any reader. Rows of one claim may be scattered;
/// they are reassembled by claim id in first-appearance order and sorted by
/// line index within the claim.
pub fn read_claims_csv<R: Read>(reader: R) -> Result<ClaimPopulation> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    {
        let headers = csv_reader
            .headers()
            .map_err(|e| Error::Csv {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let joined = headers.iter().collect::<Vec<_>>().join(",");
        if joined != CSV_HEADER {
            return Err(Error::Csv {
                line: 1,
                message: format!("expected header {CSV_HEADER:?}, found {joined:?}"),
            });
        }
    }

    // claim id -> (first-appearance order, line_index -> line)
    let mut by_claim: HashMap<String, (usize, HashMap<u32, LineItem>)> = HashMap::new();
    let mut order = 0usize;
    for record in csv_reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Csv {
                line,
                message: e.to_string(),
            }
        })?;
        let line_no = record.position().map_or(0, |p| p.line());
        let fail = |message: String| Error::Csv {
            line: line_no,
            message,
        };
        if record.len() != 4 {
            return Err(fail(format!("expected 4 fields, found {}", record.len())));
        }
        let claim_id = record[0].to_string();
        if claim_id.is_empty() {
            return Err(fail("empty claim_id".into()));
        }
        let line_index: u32 = record[1].parse().ok().filter(|&i| i >= 1).ok_or_else(|| {
            fail(format!(
                "line_index {:?} must be an integer >= 1",
                &record[1]
            ))
        })?;
        let claimed_cents = parse_amount_cents(&record[2]).map_err(&fail)?;
        let probable_error_cents = parse_amount_cents(&record[3]).map_err(&fail)?;
        if probable_error_cents > claimed_cents {
            return Err(fail(format!(
                "probable error {} exceeds claimed amount {}",
                &record[3], &record[2]
            )));
        }
        let entry = by_claim.entry(claim_id.clone()).or_insert_with(|| {
            order += 1;
            (order - 1, HashMap::new())
        });
        if entry
            .1
            .insert(
                line_index,
                LineItem {
                    claimed_cents,
                    probable_error_cents,
                },
            )
            .is_some()
        {
            return Err(fail(format!(
                "duplicate (claim_id, line_index) = ({claim_id}, {line_index})"
            )));
        }
    }

    let mut claims: Vec<(usize, Claim)> = by_claim
        .into_iter()
        .map(|(id, (ord, lines))| {
            let mut indexed: Vec<(u32, LineItem)> = lines.into_iter().collect();
            indexed.sort_unstable_by_key(|(i, _)| *i);
            let lines = indexed.into_iter().map(|(_, l)| l).collect();
            (ord, Claim { id, lines })
        })
        .collect();
    claims.sort_unstable_by_key(|(ord, _)| *ord);
    ClaimPopulation::new(claims.into_iter().map(|(_, c)| c).collect())
}

/// Parses a claims CSV file.
pub fn parse_claims_csv<P: AsRef<Path>>(path: P) -> Result<ClaimPopulation> {
    let file = std::fs::File::open(path)?;
    read_claims_csv(std::io::BufReader::new(file))
}

/// Writes a population in the claims CSV format; inverse of the parser.
pub fn write_claims_csv<W: Write>(pop: &ClaimPopulation, mut writer: W) -> Result<()> {
    writeln!(writer, "{CSV_HEADER}")?;
    for claim in pop.claims() {
        for (j, line) in claim.lines.iter().enumerate() {
            writeln!(
                writer,
                "{},{},{},{}",
                claim.id,
                j + 1,
                format_cents(line.claimed_cents),
                format_cents(line.probable_error_cents)
            )?;
        }
    }
    Ok(())
}

/// Convenience constructor for tests and examples: one single-line claim per
/// amount, probable error equal to the claimed amount.
pub fn population_from_dollars(amounts: &[f64]) -> Result<ClaimPopulation> {
    let claims = amounts
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let cents = (a * 100.0).round() as i64;
            Claim {
                id: format!("C{:04}", i + 1),
                lines: vec![LineItem {
                    claimed_cents: cents,
                    probable_error_cents: cents,
                }],
            }
        })
        .collect();
    ClaimPopulation::new(claims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pop(amounts: &[f64]) -> ClaimPopulation {
        population_from_dollars(amounts).unwrap()
    }

    #[test]
    fn moments_two_point_population() {
        let m = compute_moments(&pop(&[10.0, 20.0]));
        assert_eq!(m.n_pop, 2);
        assert_eq!(m.mu_x, 15.0);
        assert_eq!(m.sigma2_x, 25.0);
        assert_eq!(m.mu_x2, 250.0);
        assert_eq!(m.tau_x, 30.0);
        assert_eq!(m.tau_x2, 500.0);
        assert_eq!(m.g1_skew, 0.0);
    }

    #[test]
    fn moments_constant_population() {
        let m = compute_moments(&pop(&[7.0, 7.0, 7.0]));
        assert_eq!(m.sigma2_x, 0.0);
        assert_eq!(m.g1_skew, 0.0);
    }

    #[test]
    fn moments_second_raw_moment() {
        let m = compute_moments(&pop(&[1.0, 2.0, 3.0]));
        assert!((m.mu_x2 - 14.0 / 3.0).abs() < 1e-12);
        assert!((m.mu_x * m.mu_x - 4.0).abs() < 1e-12);
    }

    #[test]
    fn skewness_right_tail_positive() {
        let m = compute_moments(&pop(&[1.0, 1.0, 1.0, 10.0]));
        assert!(m.g1_skew > 0.0);
    }

    #[test]
    fn distinct_groups_two_values() {
        let g = distinct_value_groups(&pop(&[10.0, 20.0])).unwrap();
        assert_eq!(g.groups.len(), 2);
        // shift = 15 + 25/30 = 95/6; c(10) = 10(10 - 95/6), c(20) = 20(20 - 95/6)
        assert!((g.groups[0].c_value - (-58.0 - 1.0 / 3.0)).abs() < 1e-9);
        assert!((g.groups[1].c_value - (83.0 + 1.0 / 3.0)).abs() < 1e-9);
    }

    #[test]
    fn distinct_groups_multiplicity_and_total() {
        let g = distinct_value_groups(&pop(&[10.0, 10.0, 20.0])).unwrap();
        assert_eq!(g.groups[0].count, 2);
        assert_eq!(g.groups[1].count, 1);
        assert_eq!(g.min_count(), 1);
    }

    #[test]
    fn distinct_groups_constant_population_zero_c() {
        let g = distinct_value_groups(&pop(&[5.0, 5.0])).unwrap();
        assert_eq!(g.groups.len(), 1);
        assert_eq!(g.groups[0].c_value, 0.0);
    }

    #[test]
    fn parse_table_style_claim() {
        let data = "claim_id,line_index,claimed_amount,probable_error_amount\n\
                    C1,1,45.00,5.00\nC1,2,6.00,6.00\nC1,3,17.00,17.00\n";
        let p = read_claims_csv(data.as_bytes()).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.claims()[0].total_cents(), 6800);
        assert_eq!(p.claims()[0].probable_error_cents(), 2800);
    }

    #[test]
    fn parse_empty_data_section() {
        let data = "claim_id,line_index,claimed_amount,probable_error_amount\n";
        match read_claims_csv(data.as_bytes()) {
            Err(Error::EmptyPopulation) => {}
            other => panic!("expected empty population error, got {other:?}"),
        }
    }

    #[test]
    fn parse_error_exceeding_claimed_names_row() {
        let data = "claim_id,line_index,claimed_amount,probable_error_amount\n\
                    C1,1,45.00,50.00\n";
        match read_claims_csv(data.as_bytes()) {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected csv error, got {other:?}"),
        }
    }

    #[test]
    fn parse_duplicate_line_rejected() {
        let data = "claim_id,line_index,claimed_amount,probable_error_amount\n\
                    C1,1,45.00,5.00\nC1,1,6.00,6.00\n";
        assert!(matches!(
            read_claims_csv(data.as_bytes()),
            Err(Error::Csv { line: 3, .. })
        ));
    }

    #[test]
    fn parse_scattered_rows_reassemble() {
        let data = "claim_id,line_index,claimed_amount,probable_error_amount\n\
                    A,2,2.00,0.00\nB,1,9.00,9.00\nA,1,1.00,1.00\n";
        let p = read_claims_csv(data.as_bytes()).unwrap();
        assert_eq!(p.claims()[0].id, "A");
        assert_eq!(p.claims()[0].lines[0].claimed_cents, 100);
        assert_eq!(p.claims()[0].lines[1].claimed_cents, 200);
        assert_eq!(p.claims()[1].id, "B");
    }

    #[test]
    fn amount_formats() {
        assert_eq!(parse_amount_cents("45.00").unwrap(), 4500);
        assert_eq!(parse_amount_cents("0.07").unwrap(), 7);
        assert!(parse_amount_cents("45.0").is_err());
        assert!(parse_amount_cents("45").is_err());
        assert!(parse_amount_cents("-1.00").is_err());
        assert!(parse_amount_cents("1.2e2").is_err());
        assert_eq!(format_cents(4500), "45.00");
        assert_eq!(format_cents(7), "0.07");
    }

    proptest! {
        #[test]
        fn variance_identity(amounts in proptest::collection::vec(1i64..=2_000_000, 1..60)) {
            let claims = amounts.iter().enumerate().map(|(i, &c)| Claim {
                id: format!("C{i}"),
                lines: vec![LineItem { claimed_cents: c, probable_error_cents: c / 2 }],
            }).collect();
            let p = ClaimPopulation::new(claims).unwrap();
            let m = compute_moments(&p);
            let resid = (m.sigma2_x - (m.mu_x2 - m.mu_x * m.mu_x)).abs();
            prop_assert!(resid <= 1e-9 * m.mu_x2.max(1.0));
            // Relative slack: cents-squared sums can exceed 2^53, so the two
            // routes round the last ulp differently.
            prop_assert!(m.mu_x2 + 1e-12 * m.mu_x2.max(1.0) >= m.mu_x * m.mu_x);
        }

        #[test]
        fn csv_round_trip(rows in proptest::collection::vec((1i64..=500_000, 0.0f64..=1.0), 1..40)) {
            let claims: Vec<Claim> = rows.iter().enumerate().map(|(i, &(c, frac))| {
                let pe = ((c as f64) * frac) as i64;
                Claim { id: format!("R{i}"), lines: vec![LineItem { claimed_cents: c, probable_error_cents: pe }] }
            }).collect();
            let p = ClaimPopulation::new(claims).unwrap();
            let mut buf = Vec::new();
            write_claims_csv(&p, &mut buf).unwrap();
            let back = read_claims_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(p, back);
        }

        #[test]
        fn groups_cover_population(amounts in proptest::collection::vec(1i64..=500, 1..50)) {
            let claims: Vec<Claim> = amounts.iter().enumerate().map(|(i, &c)| Claim {
                id: format!("G{i}"),
                lines: vec![LineItem { claimed_cents: c * 100, probable_error_cents: 0 }],
            }).collect();
            let p = ClaimPopulation::new(claims).unwrap();
            let m = compute_moments(&p);
            let g = distinct_value_groups(&p).unwrap();
            let n: usize = g.groups.iter().map(|v| v.count).sum();
            prop_assert_eq!(n, p.len());
            let tau: f64 = g.groups.iter().map(|v| v.count as f64 * v.value).sum();
            prop_assert!((tau - m.tau_x).abs() <= 1e-9 * m.tau_x.max(1.0));
            prop_assert!(g.groups.windows(2).all(|w| w[0].value_cents < w[1].value_cents));
        }
    }
}
