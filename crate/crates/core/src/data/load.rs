//! File ingestion: the benchmark `.ts/.valid/.test` trios of comma-separated
//! integers, and headered mixed CSV with a configurable missing token.

use super::{Cell, ColumnKind, ColumnMeta, DataError, Dataset};
use std::fs;
use std::io::Write;
use std::path::Path;

fn read_to_string(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_int_matrix(path: &Path) -> Result<Vec<Vec<u32>>, DataError> {
    let text = read_to_string(path)?;
    let mut rows: Vec<Vec<u32>> = Vec::new();
    let mut width: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let parse_err = |msg: String| DataError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg,
        };
        let row: Vec<u32> = line
            .split(',')
            .map(|tok| {
                tok.parse::<u32>()
                    .map_err(|_| parse_err(format!("non-integer token {tok:?}")))
            })
            .collect::<Result<_, _>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_err(format!("expected {w} values, got {}", row.len())));
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: "empty file".into(),
        });
    }
    Ok(rows)
}

fn discrete_schema_for(matrices: &[&Vec<Vec<u32>>], width: usize) -> Vec<ColumnMeta> {
    let mut max = vec![0u32; width];
    for m in matrices {
        for row in m.iter() {
            for (mx, &v) in max.iter_mut().zip(row) {
                *mx = (*mx).max(v);
            }
        }
    }
    max.iter()
        .enumerate()
        .map(|(c, &mx)| ColumnMeta::discrete(format!("v{c}"), (mx + 1).max(2)))
        .collect()
}

fn to_dataset(schema: Vec<ColumnMeta>, matrix: Vec<Vec<u32>>) -> Result<Dataset, DataError> {
    Dataset::new(
        schema,
        matrix
            .into_iter()
            .map(|row| row.into_iter().map(Cell::Discrete).collect()),
    )
}

/// Loads `<stem>.ts.data`, `<stem>.valid.data`, `<stem>.test.data`. All
/// columns are discrete with arity `1 + max value` across the trio (at
/// least 2); the files carry no header and no missing cells.
pub fn load_benchmark_triplet(
    stem: impl AsRef<Path>,
) -> Result<(Dataset, Dataset, Dataset), DataError> {
    let stem = stem.as_ref();
    let with_ext = |ext: &str| {
        let mut s = stem.as_os_str().to_owned();
        s.push(ext);
        std::path::PathBuf::from(s)
    };
    let train_path = with_ext(".ts.data");
    let valid_path = with_ext(".valid.data");
    let test_path = with_ext(".test.data");

    let train = parse_int_matrix(&train_path)?;
    let valid = parse_int_matrix(&valid_path)?;
    let test = parse_int_matrix(&test_path)?;

    let width = train[0].len();
    for (m, path) in [(&valid, &valid_path), (&test, &test_path)] {
        if m[0].len() != width {
            return Err(DataError::Parse {
                path: path.display().to_string(),
                line: 1,
                msg: format!("expected {width} columns to match the training file"),
            });
        }
    }

    let schema = discrete_schema_for(&[&train, &valid, &test], width);
    Ok((
        to_dataset(schema.clone(), train)?,
        to_dataset(schema.clone(), valid)?,
        to_dataset(schema, test)?,
    ))
}

/// Loads a single benchmark-format file, inferring arities from it alone.
pub fn load_benchmark_file(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let matrix = parse_int_matrix(path)?;
    let schema = discrete_schema_for(&[&matrix], matrix[0].len());
    to_dataset(schema, matrix)
}

/// Writes a fully observed discrete dataset in the benchmark file format.
pub fn write_benchmark_file(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = String::new();
    for row in dataset.rows() {
        let mut first = true;
        for cell in row {
            if !first {
                out.push(',');
            }
            first = false;
            match cell {
                Cell::Discrete(v) => out.push_str(&v.to_string()),
                _ => {
                    return Err(DataError::InvalidDataset(
                        "benchmark format holds fully observed discrete data only".into(),
                    ))
                }
            }
        }
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(out.as_bytes()).map_err(io_err)
}

/// Header names plus per-cell tokens, `None` for missing cells.
type RawCsv = (Vec<String>, Vec<Vec<Option<String>>>);

fn read_csv_raw(path: &Path, missing_token: &str) -> Result<RawCsv, DataError> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| DataError::Parse {
        path: path.display().to_string(),
        line: 1,
        msg: "empty file".into(),
    })?;
    let header = header.strip_suffix('\r').unwrap_or(header);
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let width = names.len();

    let mut raw: Vec<Vec<Option<String>>> = Vec::new();
    for (i, line) in lines {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let tokens: Vec<&str> = line.split(',').map(str::trim).collect();
        if tokens.len() != width {
            return Err(DataError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: format!("expected {width} cells, got {}", tokens.len()),
            });
        }
        raw.push(
            tokens
                .into_iter()
                .map(|t| {
                    if t.is_empty() || t == missing_token {
                        None
                    } else {
                        Some(t.to_string())
                    }
                })
                .collect(),
        );
    }
    Ok((names, raw))
}

fn cells_for_schema(
    path: &Path,
    raw: Vec<Vec<Option<String>>>,
    schema: &[ColumnMeta],
) -> Result<Vec<Vec<Cell>>, DataError> {
    let mut rows = Vec::with_capacity(raw.len());
    for (i, row) in raw.into_iter().enumerate() {
        let parse_err = |msg: String| DataError::Parse {
            path: path.display().to_string(),
            line: i + 2,
            msg,
        };
        let mut cells = Vec::with_capacity(schema.len());
        for (meta, tok) in schema.iter().zip(row) {
            let cell = match tok {
                None => Cell::Missing,
                Some(t) => match meta.kind {
                    ColumnKind::Continuous => {
                        let x: f64 = t
                            .parse()
                            .map_err(|_| parse_err(format!("cannot parse {t:?} as a real")))?;
                        if !x.is_finite() {
                            return Err(parse_err(format!("non-finite value {t:?}")));
                        }
                        Cell::Continuous(x)
                    }
                    ColumnKind::Discrete { .. } => Cell::Discrete(t.parse().map_err(|_| {
                        parse_err(format!("cannot parse {t:?} as a non-negative integer"))
                    })?),
                },
            };
            cells.push(cell);
        }
        rows.push(cells);
    }
    Ok(rows)
}

/// Loads a headered CSV of mixed discrete/continuous columns. A column is
/// continuous if any observed cell carries a decimal point or exponent,
/// otherwise discrete with arity `1 + max value` (at least 2). The missing
/// token and empty cells both read as missing.
pub fn load_mixed_csv(path: impl AsRef<Path>, missing_token: &str) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let (names, raw) = read_csv_raw(path, missing_token)?;

    let looks_real = |t: &str| t.contains(['.', 'e', 'E']);
    let mut schema = Vec::with_capacity(names.len());
    for (c, name) in names.iter().enumerate() {
        let observed: Vec<&String> = raw.iter().filter_map(|row| row[c].as_ref()).collect();
        if observed.is_empty() {
            return Err(DataError::Parse {
                path: path.display().to_string(),
                line: 1,
                msg: format!("column {name:?} has no observed values"),
            });
        }
        if observed.iter().any(|t| looks_real(t)) {
            schema.push(ColumnMeta::continuous(name.clone()));
        } else {
            let mut max = 0u32;
            for t in &observed {
                let v: u32 = t.parse().map_err(|_| DataError::Parse {
                    path: path.display().to_string(),
                    line: 1,
                    msg: format!("column {name:?}: cannot parse {t:?} as a non-negative integer"),
                })?;
                max = max.max(v);
            }
            schema.push(ColumnMeta::discrete(name.clone(), (max + 1).max(2)));
        }
    }

    let rows = cells_for_schema(path, raw, &schema)?;
    Dataset::new(schema, rows)
}

/// Loads a headered CSV against known column kinds (e.g. a model schema), so
/// columns need not be inferable from the file itself. Header names are
/// kept; the column count must match.
pub fn load_mixed_csv_with_kinds(
    path: impl AsRef<Path>,
    missing_token: &str,
    kinds: &[ColumnKind],
) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let (names, raw) = read_csv_raw(path, missing_token)?;
    if names.len() != kinds.len() {
        return Err(DataError::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: format!("expected {} columns, found {}", kinds.len(), names.len()),
        });
    }
    let schema: Vec<ColumnMeta> = names
        .into_iter()
        .zip(kinds)
        .map(|(name, &kind)| ColumnMeta { name, kind })
        .collect();
    let rows = cells_for_schema(path, raw, &schema)?;
    Dataset::new(schema, rows)
}

/// Writes a dataset as mixed CSV; continuous cells keep full precision.
pub fn write_mixed_csv(
    dataset: &Dataset,
    path: impl AsRef<Path>,
    missing_token: &str,
) -> Result<(), DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = String::new();
    let names: Vec<&str> = dataset.schema().iter().map(|m| m.name.as_str()).collect();
    out.push_str(&names.join(","));
    out.push('\n');
    for row in dataset.rows() {
        let mut first = true;
        for cell in row {
            if !first {
                out.push(',');
            }
            first = false;
            match cell {
                Cell::Discrete(v) => out.push_str(&v.to_string()),
                Cell::Continuous(x) => out.push_str(&format!("{x:.16e}")),
                Cell::Missing => out.push_str(missing_token),
            }
        }
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(out.as_bytes()).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(path: &Path, content: &str) {
        let mut f = fs::File::create(path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
    }

    #[test]
    fn triplet_infers_binary_schema() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("toy");
        write(&dir.path().join("toy.ts.data"), "0,1,0\n1,1,1\n");
        write(&dir.path().join("toy.valid.data"), "0,0,0\n");
        write(&dir.path().join("toy.test.data"), "1,0,1\n");
        let (train, valid, test) = load_benchmark_triplet(&stem).unwrap();
        assert_eq!(train.n_rows(), 2);
        assert_eq!(valid.n_rows(), 1);
        assert_eq!(test.n_rows(), 1);
        assert_eq!(train.n_cols(), 3);
        for m in train.schema() {
            assert_eq!(m.kind, ColumnKind::Discrete { arity: 2 });
        }
    }

    #[test]
    fn triplet_arity_follows_max_value_across_trio() {
        let dir = tempfile::tempdir().unwrap();
        write(&dir.path().join("t.ts.data"), "0,1\n0,0\n");
        write(&dir.path().join("t.valid.data"), "0,2\n");
        write(&dir.path().join("t.test.data"), "1,0\n");
        let (train, _, _) = load_benchmark_triplet(dir.path().join("t")).unwrap();
        assert_eq!(train.schema()[0].kind, ColumnKind::Discrete { arity: 2 });
        assert_eq!(train.schema()[1].kind, ColumnKind::Discrete { arity: 3 });
    }

    #[test]
    fn triplet_missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        write(&dir.path().join("t.ts.data"), "0\n");
        let err = load_benchmark_triplet(dir.path().join("t")).unwrap_err();
        assert!(matches!(err, DataError::Io { .. }));
    }

    #[test]
    fn triplet_rejects_ragged_and_non_integer_rows() {
        let dir = tempfile::tempdir().unwrap();
        write(&dir.path().join("t.ts.data"), "0,1\n0\n");
        write(&dir.path().join("t.valid.data"), "0,1\n");
        write(&dir.path().join("t.test.data"), "0,1\n");
        assert!(matches!(
            load_benchmark_triplet(dir.path().join("t")).unwrap_err(),
            DataError::Parse { line: 2, .. }
        ));
        write(&dir.path().join("t.ts.data"), "0,x\n");
        assert!(matches!(
            load_benchmark_triplet(dir.path().join("t")).unwrap_err(),
            DataError::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn benchmark_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let content = "0,1,0\n1,1,1\n0,0,2\n";
        let p = dir.path().join("r.ts.data");
        write(&p, content);
        write(&dir.path().join("r.valid.data"), "0,0,0\n");
        write(&dir.path().join("r.test.data"), "0,0,0\n");
        let (train, _, _) = load_benchmark_triplet(dir.path().join("r")).unwrap();
        let out = dir.path().join("again.data");
        write_benchmark_file(&train, &out).unwrap();
        assert_eq!(fs::read_to_string(&out).unwrap(), content);
    }

    #[test]
    fn mixed_csv_types_columns_and_reads_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write(&p, "a,b\n1,0.5\n?,1.5\n");
        let ds = load_mixed_csv(&p, "?").unwrap();
        assert_eq!(ds.schema()[0].kind, ColumnKind::Discrete { arity: 2 });
        assert_eq!(ds.schema()[1].kind, ColumnKind::Continuous);
        assert_eq!(ds.cell(1, 0), Cell::Missing);
        assert_eq!(ds.cell(0, 1), Cell::Continuous(0.5));
    }

    #[test]
    fn mixed_csv_integer_column_arity() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write(&p, "a\n3\n1\n");
        let ds = load_mixed_csv(&p, "?").unwrap();
        assert_eq!(ds.schema()[0].kind, ColumnKind::Discrete { arity: 4 });
    }

    #[test]
    fn mixed_csv_all_missing_column_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write(&p, "a\n?\n?\n");
        assert!(load_mixed_csv(&p, "?").is_err());
    }

    #[test]
    fn mixed_csv_empty_cell_is_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write(&p, "a,b\n,1\n0,2\n");
        let ds = load_mixed_csv(&p, "?").unwrap();
        assert_eq!(ds.cell(0, 0), Cell::Missing);
    }

    #[test]
    fn mixed_csv_round_trip_preserves_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write(&p, "a,b\n1,0.123456789012345678\n?,1.5e-8\n");
        let ds = load_mixed_csv(&p, "?").unwrap();
        let q = dir.path().join("m2.csv");
        write_mixed_csv(&ds, &q, "?").unwrap();
        let ds2 = load_mixed_csv(&q, "?").unwrap();
        for r in 0..ds.n_rows() {
            assert_eq!(ds.row(r), ds2.row(r));
        }
    }
}
