use std::io::Read;
use std::path::Path;

use super::{check_records, DemographicSchema, EvalRecord, FairnessError};

const FIXED_COLUMNS: [&str; 3] = ["sample_id", "true_label", "pred_label"];

/// Reads a predictions CSV with header
/// `sample_id,true_label,pred_label,<attribute>...`.
pub fn read_predictions<R: Read>(
    reader: R,
    schema: &DemographicSchema,
) -> Result<Vec<EvalRecord>, FairnessError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| FairnessError::Csv {
            line: 1,
            message: e.to_string(),
        })?
        .clone();

    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| FairnessError::MissingColumn(name.to_string()))
    };
    let [id_col, true_col, pred_col] = [
        column(FIXED_COLUMNS[0])?,
        column(FIXED_COLUMNS[1])?,
        column(FIXED_COLUMNS[2])?,
    ];
    let attr_cols = schema
        .attributes
        .iter()
        .map(|a| Ok((a.name.clone(), column(&a.name)?)))
        .collect::<Result<Vec<_>, FairnessError>>()?;
    if let Some(extra) = headers
        .iter()
        .find(|h| !FIXED_COLUMNS.contains(h) && schema.attribute(h).is_none())
    {
        return Err(FairnessError::UnexpectedColumn(extra.to_string()));
    }

    let mut records = Vec::new();
    for row in csv.records() {
        let row = row.map_err(|e| FairnessError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let label = |col: usize, what: &str| {
            row[col].parse::<usize>().map_err(|_| FairnessError::Csv {
                line,
                message: format!("{what} {:?} is not a class index", &row[col]),
            })
        };
        records.push(EvalRecord {
            sample_id: row[id_col].to_string(),
            true_label: label(true_col, "true_label")?,
            pred_label: label(pred_col, "pred_label")?,
            memberships: attr_cols
                .iter()
                .map(|(name, col)| (name.clone(), row[*col].to_string()))
                .collect(),
        });
    }
    check_records(&records, schema)?;
    Ok(records)
}

pub fn read_predictions_file(
    path: &Path,
    schema: &DemographicSchema,
) -> Result<Vec<EvalRecord>, FairnessError> {
    let file = std::fs::File::open(path).map_err(|e| FairnessError::Csv {
        line: 0,
        message: format!("opening {}: {e}", path.display()),
    })?;
    read_predictions(file, schema)
}
