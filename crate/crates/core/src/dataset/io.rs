use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{IdRemap, QMatrix, ResponseDataset, ResponseLog};
use crate::error::{CdmError, Result};

/// Logs with dense ids plus the tables mapping dense ids back to the
/// external ids found in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedLogs {
    pub logs: Vec<ResponseLog>,
    pub remap: IdRemap,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CdmError::io(path, e))
}

/// Dense ids in ascending external order: numeric when every id parses as
/// an integer, lexicographic otherwise.
fn densify(ids: &[String]) -> (Vec<String>, HashMap<String, usize>) {
    let mut uniq: Vec<String> = ids.to_vec();
    uniq.sort();
    uniq.dedup();
    if uniq.iter().all(|s| s.parse::<i64>().is_ok()) {
        uniq.sort_by_key(|s| s.parse::<i64>().expect("checked"));
    }
    let index = uniq.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    (uniq, index)
}

/// Reads `learner_id,question_id,score[,order]` with a mandatory header;
/// columns are located by name and unknown columns are ignored. Duplicate
/// pairs are retained.
pub fn load_response_logs(path: &Path) -> Result<LoadedLogs> {
    let text = read(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(CdmError::NoLogs);
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| cols.iter().position(|c| *c == name);
    let parse_err = |line: usize, msg: String| CdmError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let (Some(li), Some(qi), Some(si)) = (find("learner_id"), find("question_id"), find("score")) else {
        return Err(parse_err(
            1,
            format!("header must name learner_id, question_id and score, got `{header}`"),
        ));
    };
    let oi = find("order");

    let mut raw = Vec::new();
    for (lineno, line) in lines {
        let line_no = lineno + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < cols.len() {
            return Err(parse_err(
                line_no,
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        let score = match fields[si] {
            "1" | "1.0" => 1u8,
            "0" | "0.0" => 0u8,
            other => {
                if other.parse::<f64>().is_ok() {
                    return Err(CdmError::Validation(format!(
                        "{}:{line_no}: score {other} is not in {{0,1}}",
                        path.display()
                    )));
                }
                return Err(parse_err(line_no, format!("score `{other}` is not a number")));
            }
        };
        let order = match oi {
            Some(oi) if !fields[oi].is_empty() => Some(
                fields[oi]
                    .parse::<i64>()
                    .map_err(|_| parse_err(line_no, format!("order `{}` is not an integer", fields[oi])))?,
            ),
            _ => None,
        };
        if fields[li].is_empty() || fields[qi].is_empty() {
            return Err(parse_err(line_no, "empty id".into()));
        }
        raw.push((fields[li].to_string(), fields[qi].to_string(), score, order));
    }
    if raw.is_empty() {
        return Err(CdmError::NoLogs);
    }
    let (learners, lidx) = densify(&raw.iter().map(|r| r.0.clone()).collect::<Vec<_>>());
    let (questions, qidx) = densify(&raw.iter().map(|r| r.1.clone()).collect::<Vec<_>>());
    let logs = raw
        .into_iter()
        .map(|(l, q, score, order)| ResponseLog {
            learner: lidx[&l],
            question: qidx[&q],
            score,
            order,
        })
        .collect();
    Ok(LoadedLogs {
        logs,
        remap: IdRemap { learners, questions },
    })
}

/// One binary row per question. A leading non-numeric header row is skipped.
pub fn load_q_matrix(path: &Path) -> Result<QMatrix> {
    let text = read(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if rows.is_empty() && fields.iter().any(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        let row = fields
            .iter()
            .map(|f| match *f {
                "0" | "0.0" => Ok(0u8),
                "1" | "1.0" => Ok(1u8),
                other => Err(CdmError::Validation(format!(
                    "{}:{}: Q-matrix entry `{other}` is not binary",
                    path.display(),
                    lineno + 1
                ))),
            })
            .collect::<Result<Vec<u8>>>()?;
        rows.push(row);
    }
    QMatrix::new(rows)
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CdmError::io(dir, e))?;
        }
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CdmError::io(path, e))
}

pub fn write_logs_csv(path: &Path, dataset: &ResponseDataset) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| CdmError::io(path, e);
    writeln!(w, "learner_id,question_id,score").map_err(io)?;
    for log in &dataset.logs {
        writeln!(
            w,
            "{},{},{}",
            dataset.remap.learners[log.learner], dataset.remap.questions[log.question], log.score
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_q_matrix_csv(path: &Path, q: &QMatrix) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| CdmError::io(path, e);
    for j in 0..q.questions() {
        let row: Vec<String> = q.row(j).iter().map(u8::to_string).collect();
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// `external_id,dense_id` table.
pub fn write_remap_csv(path: &Path, ids: &[String]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| CdmError::io(path, e);
    writeln!(w, "external_id,dense_id").map_err(io)?;
    for (d, e) in ids.iter().enumerate() {
        writeln!(w, "{e},{d}").map_err(io)?;
    }
    w.flush().map_err(io)
}
