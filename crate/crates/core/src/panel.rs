//! Wave-snapshot panel data and its CSV representation.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const PANEL_HEADER: [&str; 5] = ["id", "time", "state", "age", "female"];

/// Observed state codes.
pub const HEALTHY: u8 = 1;
pub const DEMENTIA: u8 = 2;
pub const DEAD: u8 = 3;

/// One row of the panel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelObservation {
    pub id: u64,
    pub time: f64,
    pub state: u8,
    pub age: f64,
    pub female: bool,
}

/// All observations of one individual, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub id: u64,
    pub female: bool,
    pub times: Vec<f64>,
    pub ages: Vec<f64>,
    pub states: Vec<u8>,
}

impl Individual {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Panel {
    pub individuals: Vec<Individual>,
}

/// A schema or consistency problem tied to a 1-based file line.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl Panel {
    /// Groups rows by id (first-appearance order) after checking them.
    pub fn from_observations(rows: &[PanelObservation]) -> Result<Self> {
        let lines: Vec<usize> = (0..rows.len()).map(|i| i + 2).collect();
        let v = check_rows(rows, &lines);
        if let Some(first) = v.first() {
            return Err(Error::DataValidation(format!("{first} ({} violation(s))", v.len())));
        }
        Ok(group(rows))
    }

    pub fn observations(&self) -> impl Iterator<Item = PanelObservation> + '_ {
        self.individuals.iter().flat_map(|ind| {
            (0..ind.len()).map(move |j| PanelObservation {
                id: ind.id,
                time: ind.times[j],
                state: ind.states[j],
                age: ind.ages[j],
                female: ind.female,
            })
        })
    }

    pub fn n_observations(&self) -> usize {
        self.individuals.iter().map(Individual::len).sum()
    }

    /// Individual-transition count `sum_i (m_i - 1)`.
    pub fn n_transitions(&self) -> usize {
        self.individuals.iter().map(|i| i.len().saturating_sub(1)).sum()
    }

    /// Ages at the start of every observed interval.
    pub fn interval_start_ages(&self) -> Vec<f64> {
        self.individuals
            .iter()
            .flat_map(|i| i.ages[..i.len().saturating_sub(1)].iter().copied())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(PANEL_HEADER).map_err(csv_err)?;
        for o in self.observations() {
            w.write_record([
                o.id.to_string(),
                o.time.to_string(),
                o.state.to_string(),
                o.age.to_string(),
                u8::from(o.female).to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let (rows, violations) = parse_and_check(input)?;
        if let Some(first) = violations.first() {
            return Err(Error::DataValidation(format!("{first} ({} violation(s))", violations.len())));
        }
        Ok(group(&rows))
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)
            .map_err(|e| Error::DataValidation(format!("cannot open panel {}: {e}", path.display())))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::DataValidation(format!("csv: {e}"))
}

fn group(rows: &[PanelObservation]) -> Panel {
    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut individuals: Vec<Individual> = Vec::new();
    for r in rows {
        let slot = *index.entry(r.id).or_insert_with(|| {
            individuals.push(Individual { id: r.id, female: r.female, times: vec![], ages: vec![], states: vec![] });
            individuals.len() - 1
        });
        let ind = &mut individuals[slot];
        ind.times.push(r.time);
        ind.ages.push(r.age);
        ind.states.push(r.state);
    }
    Panel { individuals }
}

/// Parses panel CSV and lists every schema violation with its line number.
pub fn validate_panel<R: Read>(input: R) -> Result<Vec<Violation>> {
    Ok(parse_and_check(input)?.1)
}

fn parse_and_check<R: Read>(input: R) -> Result<(Vec<PanelObservation>, Vec<Violation>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let mut violations = Vec::new();
    let header = rdr.headers().map_err(csv_err)?.clone();
    let got: Vec<&str> = header.iter().collect();
    if got != PANEL_HEADER {
        violations.push(Violation {
            line: 1,
            message: format!("header must be `{}`, found `{}`", PANEL_HEADER.join(","), got.join(",")),
        });
        return Ok((vec![], violations));
    }
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                violations.push(Violation { line, message: format!("malformed record: {e}") });
                continue;
            }
        };
        match parse_row(&rec) {
            Ok(o) => {
                rows.push(o);
                lines.push(line);
            }
            Err(message) => violations.push(Violation { line, message }),
        }
    }
    violations.extend(check_rows(&rows, &lines));
    violations.sort_by_key(|v| v.line);
    Ok((rows, violations))
}

fn parse_row(rec: &csv::StringRecord) -> std::result::Result<PanelObservation, String> {
    if rec.len() != 5 {
        return Err(format!("expected 5 fields, found {}", rec.len()));
    }
    let id: u64 = rec[0].parse().map_err(|_| format!("id `{}` is not a non-negative integer", &rec[0]))?;
    let num = |name: &str, s: &str| -> std::result::Result<f64, String> {
        let v: f64 = s.parse().map_err(|_| format!("{name} `{s}` is not a number"))?;
        if !v.is_finite() {
            return Err(format!("{name} `{s}` is not finite"));
        }
        Ok(v)
    };
    let time = num("time", &rec[1])?;
    let state: u8 = match &rec[2] {
        "1" => HEALTHY,
        "2" => DEMENTIA,
        "3" => DEAD,
        s => return Err(format!("state `{s}` outside {{1,2,3}}")),
    };
    let age = num("age", &rec[3])?;
    if age <= 0.0 {
        return Err(format!("age {age} must be positive"));
    }
    let female = match &rec[4] {
        "0" => false,
        "1" => true,
        s => return Err(format!("female `{s}` must be 0 or 1")),
    };
    Ok(PanelObservation { id, time, state, age, female })
}

fn check_rows(rows: &[PanelObservation], lines: &[usize]) -> Vec<Violation> {
    struct Last {
        time: f64,
        dead: bool,
        female: bool,
    }
    let mut out = Vec::new();
    let mut last: HashMap<u64, Last> = HashMap::new();
    for (r, &line) in rows.iter().zip(lines) {
        if !r.time.is_finite() || !r.age.is_finite() || r.age <= 0.0 || !(1..=3).contains(&r.state) {
            out.push(Violation { line, message: format!("invalid values in row for id {}", r.id) });
            continue;
        }
        match last.get_mut(&r.id) {
            None => {
                last.insert(r.id, Last { time: r.time, dead: r.state == DEAD, female: r.female });
            }
            Some(prev) => {
                if prev.dead {
                    out.push(Violation { line, message: format!("id {} has an observation after death", r.id) });
                }
                if r.time <= prev.time {
                    out.push(Violation {
                        line,
                        message: format!("id {} times not strictly increasing ({} after {})", r.id, r.time, prev.time),
                    });
                }
                if r.female != prev.female {
                    out.push(Violation { line, message: format!("id {} changes the female indicator", r.id) });
                }
                prev.time = r.time;
                prev.dead |= r.state == DEAD;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLEAN: &str = "id,time,state,age,female\n1,0,1,70,1\n1,2,2,72,1\n1,4,3,74,1\n2,0,1,60.5,0\n2,2,1,62.5,0\n";

    #[test]
    fn clean_panel_round_trips() {
        assert!(validate_panel(CLEAN.as_bytes()).unwrap().is_empty());
        let p = Panel::read_csv(CLEAN.as_bytes()).unwrap();
        assert_eq!(p.individuals.len(), 2);
        assert_eq!(p.n_observations(), 5);
        assert_eq!(p.n_transitions(), 3);
        assert_eq!(p.to_csv_string(), CLEAN);
        assert_eq!(p.interval_start_ages(), vec![70.0, 72.0, 60.5]);
    }

    #[test]
    fn row_after_death_is_named() {
        let text = format!("{CLEAN}1,6,1,76,1\n");
        let v = validate_panel(text.as_bytes()).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].line, 7);
        assert!(v[0].message.contains("after death"));
        let err = Panel::read_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 7"));
    }

    #[test]
    fn non_monotone_times() {
        let text = "id,time,state,age,female\n1,2,1,70,0\n1,2,1,70,0\n1,1,1,70,0\n";
        let v = validate_panel(text.as_bytes()).unwrap();
        assert_eq!(v.iter().map(|v| v.line).collect::<Vec<_>>(), vec![3, 4]);
    }

    #[test]
    fn schema_errors() {
        let v = validate_panel("id,time,state\n1,0,1\n".as_bytes()).unwrap();
        assert_eq!(v[0].line, 1);
        let v = validate_panel("id,time,state,age,female\n1,0,4,70,0\n1,x,1,70,0\n1,3,1,-2,0\n1,4,1,70,2\n".as_bytes()).unwrap();
        assert_eq!(v.len(), 4);
        assert!(v[0].message.contains("state"));
        let v = validate_panel("id,time,state,age,female\n1,0,1,NaN,0\n".as_bytes()).unwrap();
        assert_eq!(v.len(), 1);
    }

    #[test]
    fn from_observations_checks() {
        let rows = [
            PanelObservation { id: 4, time: 0.0, state: 3, age: 70.0, female: false },
            PanelObservation { id: 4, time: 2.0, state: 3, age: 72.0, female: false },
        ];
        assert!(Panel::from_observations(&rows).is_err());
        assert!(Panel::from_observations(&rows[..1]).is_ok());
    }
}
