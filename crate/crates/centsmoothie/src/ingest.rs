//! Dataset file formats and the significance-test extraction pipeline.
//!
//! Formats (UTF-8 text, `#` starts a comment line):
//! * triples: one `drugA<TAB>drugB<TAB>sideEffect` per line;
//! * features: header `drug<TAB>f0<TAB>f1...`, then one row of reals per drug;
//! * reports: one `drug1,drug2,...<TAB>se1,se2,...` per line.
//!
//! Extraction splits the reports, per drug pair, into an exposed group
//! (reports containing both drugs) and a nonexposed group, and keeps a
//! triple when a one-sided Fisher exact test finds the side-effect rate
//! significantly higher among the exposed.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hypergraph::{DdiHypergraph, Triple};

/// Raw triples plus the stable (lexicographically sorted) name maps built
/// from a triple file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleData {
    pub drug_names: Vec<String>,
    pub side_effect_names: Vec<String>,
    /// Canonicalized, deduplicated index triples.
    pub triples: Vec<(usize, usize, usize)>,
}

/// Name maps of a loaded dataset. Indices follow lexicographic name order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetNames {
    pub drug_names: Vec<String>,
    pub side_effect_names: Vec<String>,
}

impl DatasetNames {
    pub fn drug_index(&self, name: &str) -> Option<usize> {
        self.drug_names.binary_search_by(|n| n.as_str().cmp(name)).ok()
    }

    pub fn side_effect_index(&self, name: &str) -> Option<usize> {
        self.side_effect_names
            .binary_search_by(|n| n.as_str().cmp(name))
            .ok()
    }
}

fn data_lines(path: &Path) -> Result<impl Iterator<Item = (usize, String)>> {
    let file = File::open(path).map_err(|e| {
        Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: format!("cannot open: {e}"),
        }
    })?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .filter_map(|(idx, line)| match line {
            Ok(text) => {
                let trimmed = text.trim_end_matches(['\r', '\n']);
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    None
                } else {
                    Some((idx + 1, trimmed.to_string()))
                }
            }
            Err(_) => Some((idx + 1, String::new())),
        }))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Read the name triples of a triple file without building index maps.
pub fn read_triple_names(path: &Path) -> Result<Vec<(String, String, String)>> {
    let mut rows = Vec::new();
    for (line_no, line) in data_lines(path)? {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_error(
                path,
                line_no,
                format!("expected 3 tab-separated fields, got {}", fields.len()),
            ));
        }
        if fields.iter().any(|f| f.is_empty()) {
            return Err(parse_error(path, line_no, "empty field"));
        }
        if fields[0] == fields[1] {
            return Err(parse_error(
                path,
                line_no,
                format!("self-pair: drug '{}' paired with itself", fields[0]),
            ));
        }
        rows.push((
            fields[0].to_string(),
            fields[1].to_string(),
            fields[2].to_string(),
        ));
    }
    Ok(rows)
}

/// Load a triple file: canonicalized deduplicated index triples plus name
/// maps sorted lexicographically. With `strict`, an empty edge set is an
/// error.
pub fn load_triples(path: &Path, strict: bool) -> Result<TripleData> {
    let rows = read_triple_names(path)?;
    if strict && rows.is_empty() {
        return Err(parse_error(path, 0, "no triples in file (strict mode)"));
    }
    let mut drug_names: Vec<String> = rows
        .iter()
        .flat_map(|(a, b, _)| [a.clone(), b.clone()])
        .collect();
    drug_names.sort();
    drug_names.dedup();
    let mut side_effect_names: Vec<String> = rows.iter().map(|(_, _, s)| s.clone()).collect();
    side_effect_names.sort();
    side_effect_names.dedup();
    let drug_index: HashMap<&str, usize> = drug_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let se_index: HashMap<&str, usize> = side_effect_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut triples: Vec<(usize, usize, usize)> = rows
        .iter()
        .map(|(a, b, s)| {
            let (u, v) = (drug_index[a.as_str()], drug_index[b.as_str()]);
            (u.min(v), u.max(v), se_index[s.as_str()])
        })
        .collect();
    triples.sort_unstable();
    triples.dedup();
    Ok(TripleData {
        drug_names,
        side_effect_names,
        triples,
    })
}

/// Load a feature file aligned to the given drug order. Every drug must
/// have exactly one row; rows for unknown drugs are rejected.
pub fn load_features(path: &Path, drug_names: &[String]) -> Result<(Vec<f64>, usize)> {
    let index: HashMap<&str, usize> = drug_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut lines = data_lines(path)?;
    let (header_line, header) = lines
        .next()
        .ok_or_else(|| parse_error(path, 0, "missing header line"))?;
    let header_fields: Vec<&str> = header.split('\t').collect();
    if header_fields.len() < 2 || header_fields[0] != "drug" {
        return Err(parse_error(
            path,
            header_line,
            "header must be 'drug<TAB>f0<TAB>f1...'",
        ));
    }
    let width = header_fields.len() - 1;
    let mut matrix = vec![f64::NAN; drug_names.len() * width];
    let mut seen = vec![false; drug_names.len()];
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != width + 1 {
            return Err(parse_error(
                path,
                line_no,
                format!("expected {} fields, got {}", width + 1, fields.len()),
            ));
        }
        let drug = fields[0];
        let &row = index.get(drug).ok_or_else(|| Error::UnknownName {
            kind: "drug",
            name: drug.to_string(),
        })?;
        if seen[row] {
            return Err(parse_error(path, line_no, format!("duplicate row for drug '{drug}'")));
        }
        seen[row] = true;
        for (col, field) in fields[1..].iter().enumerate() {
            matrix[row * width + col] = field.parse().map_err(|_| {
                parse_error(path, line_no, format!("bad real value '{field}'"))
            })?;
        }
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::MissingFeatureRow(drug_names[missing].clone()));
    }
    Ok((matrix, width))
}

/// Load a (triples, features) file pair into a hypergraph. The drug node
/// set is the feature file's row set, so drugs without any triple keep
/// their nodes; every drug referenced by a triple must have features.
pub fn load_dataset(triples_path: &Path, features_path: &Path) -> Result<(DdiHypergraph, DatasetNames)> {
    let rows = read_triple_names(triples_path)?;
    // Drug universe comes from the feature file.
    let mut drug_names: Vec<String> = Vec::new();
    for (line_no, line) in data_lines(features_path)?.skip(1) {
        let name = line.split('\t').next().unwrap_or_default();
        if name.is_empty() {
            return Err(parse_error(features_path, line_no, "empty drug name"));
        }
        drug_names.push(name.to_string());
    }
    drug_names.sort();
    drug_names.dedup();
    let (features, width) = load_features(features_path, &drug_names)?;

    let mut side_effect_names: Vec<String> = rows.iter().map(|(_, _, s)| s.clone()).collect();
    side_effect_names.sort();
    side_effect_names.dedup();
    let names = DatasetNames {
        drug_names,
        side_effect_names,
    };
    let mut raw = Vec::with_capacity(rows.len());
    for (a, b, s) in &rows {
        let u = names.drug_index(a).ok_or_else(|| Error::UnknownName {
            kind: "drug",
            name: a.clone(),
        })?;
        let v = names.drug_index(b).ok_or_else(|| Error::UnknownName {
            kind: "drug",
            name: b.clone(),
        })?;
        let t = names
            .side_effect_index(s)
            .expect("side-effect map built from the same rows");
        raw.push((u, v, t));
    }
    let g = DdiHypergraph::build(
        names.drug_names.len(),
        names.side_effect_names.len(),
        &raw,
        features,
        width,
    )?;
    Ok((g, names))
}

/// Write triples in the triple file format (no header).
pub fn write_triples<'a>(
    out: &mut impl Write,
    rows: impl Iterator<Item = (&'a str, &'a str, &'a str)>,
) -> Result<()> {
    for (a, b, s) in rows {
        writeln!(out, "{a}\t{b}\t{s}")?;
    }
    Ok(())
}

/// Write a feature matrix in the feature file format.
pub fn write_features(
    out: &mut impl Write,
    drug_names: &[String],
    matrix: &[f64],
    width: usize,
) -> Result<()> {
    let mut header = String::from("drug");
    for i in 0..width {
        header.push_str(&format!("\tf{i}"));
    }
    writeln!(out, "{header}")?;
    for (row, name) in drug_names.iter().enumerate() {
        write!(out, "{name}")?;
        for v in &matrix[row * width..(row + 1) * width] {
            write!(out, "\t{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Graph edges rendered back to names, for triple-file export.
pub fn edges_to_names<'g>(
    g: &'g DdiHypergraph,
    names: &'g DatasetNames,
) -> impl Iterator<Item = (&'g str, &'g str, &'g str)> {
    g.edges().iter().map(|e| {
        (
            names.drug_names[e.u].as_str(),
            names.drug_names[e.v].as_str(),
            names.side_effect_names[e.t].as_str(),
        )
    })
}

/// One adverse-event report: the drugs taken and the observed side effects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub drugs: BTreeSet<String>,
    pub side_effects: BTreeSet<String>,
}

/// A table of adverse-event reports.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReportTable {
    pub reports: Vec<Report>,
}

/// Load a report file: one report per line, comma-separated drug names,
/// a tab, then comma-separated side-effect names (possibly empty).
pub fn load_reports(path: &Path) -> Result<ReportTable> {
    let mut reports = Vec::new();
    for (line_no, line) in data_lines(path)? {
        let (drug_field, se_field) = line.split_once('\t').ok_or_else(|| {
            parse_error(path, line_no, "expected 'drugs<TAB>side effects'")
        })?;
        let drugs: BTreeSet<String> = drug_field
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        if drugs.is_empty() {
            return Err(parse_error(path, line_no, "report without drugs"));
        }
        let side_effects: BTreeSet<String> = se_field
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        reports.push(Report {
            drugs,
            side_effects,
        });
    }
    Ok(ReportTable { reports })
}

/// 2x2 contingency table: `a` exposed reports with the side effect, `b`
/// exposed without, `c` nonexposed with, `d` nonexposed without.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContingencyTable {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub d: usize,
}

impl ContingencyTable {
    pub fn total(&self) -> usize {
        self.a + self.b + self.c + self.d
    }
}

/// Log-factorial table up to a fixed `n`, shared across many tests of the
/// same report set.
#[derive(Debug, Clone)]
pub struct LnFactorials(Vec<f64>);

impl LnFactorials {
    pub fn up_to(n: usize) -> LnFactorials {
        let mut table = Vec::with_capacity(n + 1);
        table.push(0.0);
        for i in 1..=n {
            table.push(table[i - 1] + (i as f64).ln());
        }
        LnFactorials(table)
    }

    fn ln_choose(&self, n: usize, k: usize) -> f64 {
        debug_assert!(k <= n);
        self.0[n] - self.0[k] - self.0[n - k]
    }
}

/// One-sided ("greater") Fisher exact test: the hypergeometric upper tail
/// `P(X >= a)` for `X ~ Hypergeometric(N, a+c, a+b)`, in log space.
/// Zero-margin tables have a single feasible outcome and return 1.
pub fn fisher_exact_one_sided(table: &ContingencyTable) -> f64 {
    let facts = LnFactorials::up_to(table.total());
    fisher_exact_with_table(&facts, table)
}

/// As [`fisher_exact_one_sided`] with a caller-provided factorial table
/// (which must cover the table total).
pub fn fisher_exact_with_table(facts: &LnFactorials, table: &ContingencyTable) -> f64 {
    let (a, b, c, d) = (table.a, table.b, table.c, table.d);
    let n_total = a + b + c + d;
    let with_se = a + c;
    let exposed = a + b;
    if with_se == 0 || exposed == 0 || with_se == n_total || exposed == n_total {
        return 1.0;
    }
    // At the feasible minimum of `a` the tail spans the whole distribution.
    if a <= exposed.saturating_sub(n_total - with_se) || a == 0 {
        return 1.0;
    }
    let ln_denom = facts.ln_choose(n_total, exposed);
    let upper = with_se.min(exposed);
    let mut tail = 0.0f64;
    for x in a..=upper {
        let rest = exposed - x;
        if rest > n_total - with_se {
            continue;
        }
        let ln_p = facts.ln_choose(with_se, x) + facts.ln_choose(n_total - with_se, rest) - ln_denom;
        tail += ln_p.exp();
    }
    tail.clamp(0.0, 1.0)
    // Note: the least extreme observation (a at its feasible minimum) sums
    // the whole distribution, so rounding is clamped back into [0, 1].
}

/// Fisher-exact extraction: for every drug pair co-occurring in at least
/// one report, test each side effect seen in the exposed group and keep
/// the triple when `p < alpha`. Returns name triples, sorted.
pub fn extract_significant(
    reports: &ReportTable,
    alpha: f64,
) -> Result<Vec<(String, String, String)>> {
    if !(0.0..=1.0).contains(&alpha) || alpha <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    let total = reports.reports.len();
    let facts = LnFactorials::up_to(total);

    // Stable drug indexing for pair enumeration.
    let mut drug_names: Vec<&String> = reports
        .reports
        .iter()
        .flat_map(|r| r.drugs.iter())
        .collect();
    drug_names.sort();
    drug_names.dedup();
    let drug_ids: HashMap<&String, usize> = drug_names
        .iter()
        .enumerate()
        .map(|(i, n)| (*n, i))
        .collect();
    let report_drugs: Vec<Vec<usize>> = reports
        .reports
        .iter()
        .map(|r| {
            let mut ids: Vec<usize> = r.drugs.iter().map(|d| drug_ids[d]).collect();
            ids.sort_unstable();
            ids
        })
        .collect();
    // Reports per drug and per side effect.
    let mut reports_of_drug: Vec<Vec<usize>> = vec![Vec::new(); drug_names.len()];
    for (ridx, ids) in report_drugs.iter().enumerate() {
        for &d in ids {
            reports_of_drug[d].push(ridx);
        }
    }
    let mut se_totals: BTreeMap<&String, usize> = BTreeMap::new();
    for r in &reports.reports {
        for s in &r.side_effects {
            *se_totals.entry(s).or_default() += 1;
        }
    }
    // Co-occurring pairs only: the exposed group is empty otherwise.
    let mut pairs: Vec<(usize, usize)> = report_drugs
        .iter()
        .flat_map(|ids| {
            ids.iter()
                .enumerate()
                .flat_map(|(i, &u)| ids[i + 1..].iter().map(move |&v| (u, v)))
        })
        .collect();
    pairs.sort_unstable();
    pairs.dedup();

    let mut triples: Vec<(String, String, String)> = pairs
        .par_iter()
        .map(|&(u, v)| {
            // Exposed group: reports containing both drugs (sorted-list
            // intersection keeps this linear).
            let (lu, lv) = (&reports_of_drug[u], &reports_of_drug[v]);
            let mut exposed = Vec::new();
            let (mut i, mut j) = (0, 0);
            while i < lu.len() && j < lv.len() {
                match lu[i].cmp(&lv[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        exposed.push(lu[i]);
                        i += 1;
                        j += 1;
                    }
                }
            }
            let exposed_count = exposed.len();
            let mut exposed_se: BTreeMap<&String, usize> = BTreeMap::new();
            for &ridx in &exposed {
                for s in &reports.reports[ridx].side_effects {
                    *exposed_se.entry(s).or_default() += 1;
                }
            }
            let mut found = Vec::new();
            for (se, &a) in &exposed_se {
                let c = se_totals[se] - a;
                let table = ContingencyTable {
                    a,
                    b: exposed_count - a,
                    c,
                    d: total - exposed_count - c,
                };
                if fisher_exact_with_table(&facts, &table) < alpha {
                    found.push((
                        drug_names[u].clone(),
                        drug_names[v].clone(),
                        (*se).clone(),
                    ));
                }
            }
            found
        })
        .flatten()
        .collect();
    triples.sort();
    Ok(triples)
}

/// Turn extracted name triples into an in-memory edge list for test and
/// pipeline use; the conversion mirrors [`load_triples`].
pub fn triples_from_names(rows: &[(String, String, String)]) -> TripleData {
    let mut drug_names: Vec<String> = rows
        .iter()
        .flat_map(|(a, b, _)| [a.clone(), b.clone()])
        .collect();
    drug_names.sort();
    drug_names.dedup();
    let mut side_effect_names: Vec<String> = rows.iter().map(|(_, _, s)| s.clone()).collect();
    side_effect_names.sort();
    side_effect_names.dedup();
    let dmap: HashMap<&str, usize> = drug_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let smap: HashMap<&str, usize> = side_effect_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut triples: Vec<(usize, usize, usize)> = rows
        .iter()
        .map(|(a, b, s)| {
            let (u, v) = (dmap[a.as_str()], dmap[b.as_str()]);
            (u.min(v), u.max(v), smap[s.as_str()])
        })
        .collect();
    triples.sort_unstable();
    triples.dedup();
    TripleData {
        drug_names,
        side_effect_names,
        triples,
    }
}

/// Used by tests to confirm sampled negatives stay within range.
pub fn triple_in_range(g: &DdiHypergraph, e: Triple) -> bool {
    e.u < e.v && e.v < g.num_drugs() && e.t < g.num_side_effects()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::NamedTempFile;

    fn temp_file(contents: &str) -> NamedTempFile {
        let mut f = NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn triple_file_dedups_mirrored_pairs() {
        let f = temp_file("# comment\naspirin\tibuprofen\tnausea\nibuprofen\taspirin\tnausea\naspirin\twarfarin\trash\n");
        let data = load_triples(f.path(), false).unwrap();
        assert_eq!(data.triples.len(), 2);
        assert_eq!(data.drug_names, vec!["aspirin", "ibuprofen", "warfarin"]);
        assert_eq!(data.side_effect_names, vec!["nausea", "rash"]);
    }

    #[test]
    fn empty_triple_file_strict_flag() {
        let f = temp_file("# nothing here\n");
        assert!(load_triples(f.path(), false).unwrap().triples.is_empty());
        assert!(load_triples(f.path(), true).is_err());
    }

    #[test]
    fn malformed_triple_line_reports_line_number() {
        let f = temp_file("a\tb\tx\na\tweird\tname\ty\n");
        match load_triples(f.path(), false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn feature_file_loads_and_realigns() {
        let f = temp_file("drug\tf0\tf1\tf2\tf3\nzeta\t1\t0\t0.5\t-1\nalpha\t0\t1\t0\t2\n");
        let names = vec!["alpha".to_string(), "zeta".to_string()];
        let (matrix, width) = load_features(f.path(), &names).unwrap();
        assert_eq!(width, 4);
        assert_eq!(&matrix[0..4], &[0.0, 1.0, 0.0, 2.0]);
        assert_eq!(&matrix[4..8], &[1.0, 0.0, 0.5, -1.0]);
    }

    #[test]
    fn missing_feature_row_names_the_drug() {
        let f = temp_file("drug\tf0\nalpha\t1\n");
        let names = vec!["alpha".to_string(), "beta".to_string()];
        match load_features(f.path(), &names) {
            Err(Error::MissingFeatureRow(name)) => assert_eq!(name, "beta"),
            other => panic!("expected missing-row error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_feature_row_rejected() {
        let f = temp_file("drug\tf0\nalpha\t1\nghost\t2\n");
        let names = vec!["alpha".to_string()];
        assert!(matches!(
            load_features(f.path(), &names),
            Err(Error::UnknownName { .. })
        ));
    }

    #[test]
    fn dataset_keeps_tripleless_drugs() {
        let triples = temp_file("a\tb\tx\n");
        let features = temp_file("drug\tf0\na\t1\nb\t0\nc\t1\n");
        let (g, names) = load_dataset(triples.path(), features.path()).unwrap();
        assert_eq!(g.num_drugs(), 3);
        assert_eq!(g.num_edges(), 1);
        assert_eq!(names.drug_names, vec!["a", "b", "c"]);
    }

    #[test]
    fn dataset_rejects_unknown_triple_drug() {
        let triples = temp_file("a\tmissing\tx\n");
        let features = temp_file("drug\tf0\na\t1\n");
        assert!(matches!(
            load_dataset(triples.path(), features.path()),
            Err(Error::UnknownName { .. })
        ));
    }

    #[test]
    fn fisher_least_extreme_observation_is_one() {
        let p = fisher_exact_one_sided(&ContingencyTable { a: 0, b: 5, c: 3, d: 2 });
        assert_eq!(p, 1.0);
        // Zero margins.
        let p = fisher_exact_one_sided(&ContingencyTable { a: 0, b: 0, c: 3, d: 2 });
        assert_eq!(p, 1.0);
        let p = fisher_exact_one_sided(&ContingencyTable { a: 2, b: 3, c: 0, d: 0 });
        assert_eq!(p, 1.0);
    }

    #[test]
    fn fisher_five_zero_zero_five() {
        let p = fisher_exact_one_sided(&ContingencyTable { a: 5, b: 0, c: 0, d: 5 });
        assert!((p - 1.0 / 252.0).abs() <= 1e-12, "p = {p}");
    }

    #[test]
    fn fisher_balanced_tables_not_significant() {
        for k in 1..6 {
            for m in 1..6 {
                let p = fisher_exact_one_sided(&ContingencyTable { a: k, b: m, c: k, d: m });
                assert!(p >= 0.5, "balanced ({k},{m},{k},{m}) gave {p}");
            }
        }
    }

    /// Direct enumeration with exact f64 binomials (Pascal's triangle): an
    /// independent route to the same tail.
    pub(crate) fn fisher_oracle(table: &ContingencyTable) -> f64 {
        let n = table.total();
        let mut choose = vec![vec![0.0f64; n + 1]; n + 1];
        for i in 0..=n {
            choose[i][0] = 1.0;
            for j in 1..=i {
                choose[i][j] = choose[i - 1][j - 1] + if j <= i - 1 { choose[i - 1][j] } else { 0.0 };
            }
        }
        let with_se = table.a + table.c;
        let exposed = table.a + table.b;
        if with_se == 0 || exposed == 0 || with_se == n || exposed == n {
            return 1.0;
        }
        let mut tail = 0.0;
        for x in table.a..=with_se.min(exposed) {
            if exposed - x > n - with_se {
                continue;
            }
            tail += choose[with_se][x] * choose[n - with_se][exposed - x] / choose[n][exposed];
        }
        tail.min(1.0)
    }

    #[test]
    fn fisher_matches_enumeration_oracle_small_tables() {
        for a in 0..6 {
            for b in 0..6 {
                for c in 0..6 {
                    for d in 0..6 {
                        if a + b + c + d == 0 {
                            continue;
                        }
                        let t = ContingencyTable { a, b, c, d };
                        let diff = (fisher_exact_one_sided(&t) - fisher_oracle(&t)).abs();
                        assert!(diff <= 1e-12, "table {t:?} differs by {diff}");
                    }
                }
            }
        }
    }

    #[test]
    fn fisher_tail_monotone_in_a() {
        // Fixed margins: moving a unit from (b, c) into (a, d) cannot make
        // the upper tail larger.
        for a in 0..5usize {
            for b in 1..5usize {
                for c in 1..5usize {
                    for d in 0..5usize {
                        let p1 = fisher_exact_one_sided(&ContingencyTable { a, b, c, d });
                        let p2 = fisher_exact_one_sided(&ContingencyTable {
                            a: a + 1,
                            b: b - 1,
                            c: c - 1,
                            d: d + 1,
                        });
                        assert!(p2 <= p1 + 1e-12);
                    }
                }
            }
        }
    }

    fn report(drugs: &[&str], ses: &[&str]) -> Report {
        Report {
            drugs: drugs.iter().map(|s| s.to_string()).collect(),
            side_effects: ses.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn extraction_drops_degenerate_nonexposed_group() {
        // Every report contains the pair: the nonexposed group is empty.
        let table = ReportTable {
            reports: vec![report(&["a", "b"], &["x"]); 6],
        };
        assert!(extract_significant(&table, 0.05).unwrap().is_empty());
    }

    #[test]
    fn extraction_keeps_exactly_the_planted_triple() {
        // Pair (a, b) always with headache (5 exposed reports), plus 5
        // single-drug reports without it: the contingency table is
        // (5, 0, 0, 5) and p = 1/252 < 0.05. No other pair co-occurs.
        let mut reports = vec![report(&["a", "b"], &["headache"]); 5];
        reports.extend(vec![report(&["c"], &["nausea"]); 5]);
        let table = ReportTable { reports };
        let kept = extract_significant(&table, 0.05).unwrap();
        assert_eq!(
            kept,
            vec![("a".to_string(), "b".to_string(), "headache".to_string())]
        );
    }

    #[test]
    fn extraction_alpha_one_keeps_all_cooccurring() {
        let reports = vec![
            report(&["a", "b"], &["x"]),
            report(&["a", "b"], &["x", "y"]),
            report(&["c"], &[]),
        ];
        let table = ReportTable { reports };
        let kept = extract_significant(&table, 1.0).unwrap();
        let expected: Vec<(String, String, String)> = vec![
            ("a".into(), "b".into(), "x".into()),
            ("a".into(), "b".into(), "y".into()),
        ];
        assert_eq!(kept, expected);
    }

    #[test]
    fn extraction_invariant_to_report_order() {
        let mut reports = vec![report(&["a", "b"], &["headache"]); 5];
        reports.extend(vec![report(&["c"], &["nausea"]); 5]);
        reports.push(report(&["a", "c"], &["nausea"]));
        let forward_order = extract_significant(&ReportTable { reports: reports.clone() }, 0.2).unwrap();
        reports.reverse();
        let reverse_order = extract_significant(&ReportTable { reports }, 0.2).unwrap();
        assert_eq!(forward_order, reverse_order);
    }

    #[test]
    fn report_file_round_trip() {
        let f = temp_file("a,b\tx,y\nc\t\n# comment\nd , e\tz\n");
        let table = load_reports(f.path()).unwrap();
        assert_eq!(table.reports.len(), 3);
        assert_eq!(table.reports[0].drugs.len(), 2);
        assert!(table.reports[1].side_effects.is_empty());
        assert!(table.reports[2].drugs.contains("d"));
        assert!(table.reports[2].drugs.contains("e"));
    }

    #[test]
    fn triple_writer_round_trips() {
        let rows = vec![
            ("a".to_string(), "b".to_string(), "x".to_string()),
            ("a".to_string(), "c".to_string(), "y".to_string()),
        ];
        let mut buf = Vec::new();
        write_triples(
            &mut buf,
            rows.iter().map(|(a, b, s)| (a.as_str(), b.as_str(), s.as_str())),
        )
        .unwrap();
        let f = temp_file(std::str::from_utf8(&buf).unwrap());
        let data = load_triples(f.path(), true).unwrap();
        assert_eq!(data.triples.len(), 2);
    }
}
