use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{HcError, Result};
use crate::hosting_capacity::{DayType, IntervalIndex, GRID_LEN};

const BUILTIN_LOAD: &str = include_str!("../../data/load_shapes.csv");
const BUILTIN_PV: &str = include_str!("../../data/pv_shapes.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Load,
    Pv,
    Ev,
}

/// One value per grid interval, in [`IntervalIndex::all`] order.
pub type Shape = Vec<f64>;

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    profile_id: String,
    month: u8,
    day_type: String,
    hour: u8,
    value: f64,
}

/// Named interval shapes of one kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileLibrary {
    pub kind: ProfileKind,
    shapes: BTreeMap<String, Shape>,
}

impl ProfileLibrary {
    pub fn new(kind: ProfileKind) -> Self {
        ProfileLibrary {
            kind,
            shapes: BTreeMap::new(),
        }
    }

    /// Inserts a shape after checking the invariants of the library kind.
    pub fn insert(&mut self, id: impl Into<String>, shape: Shape) -> Result<()> {
        let id = id.into();
        if shape.len() != GRID_LEN {
            return Err(HcError::InvalidArgument(format!(
                "profile `{id}` has {} values, expected {GRID_LEN}",
                shape.len()
            )));
        }
        if let Some(v) = shape.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(HcError::InvalidArgument(format!("profile `{id}` has value {v}")));
        }
        match self.kind {
            ProfileKind::Load => {
                let max = shape.iter().cloned().fold(0.0, f64::max);
                if shape.iter().any(|v| *v > 1.0) || (max - 1.0).abs() > 1e-6 {
                    return Err(HcError::InvalidArgument(format!(
                        "load profile `{id}` must lie in [0, 1] with maximum 1 (max {max})"
                    )));
                }
            }
            ProfileKind::Pv => {
                for i in IntervalIndex::all() {
                    if (i.hour < 3 || i.hour > 21) && shape[i.ordinal()] != 0.0 {
                        return Err(HcError::InvalidArgument(format!(
                            "pv profile `{id}` is nonzero at night ({i})"
                        )));
                    }
                }
            }
            ProfileKind::Ev => {}
        }
        self.shapes.insert(id, shape);
        Ok(())
    }

    /// Reads `profile_id,month,day_type,hour,value` rows; every profile must
    /// cover all 576 intervals.
    pub fn from_csv(kind: ProfileKind, reader: impl Read) -> Result<Self> {
        let mut partial: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
        let mut rdr = csv::Reader::from_reader(reader);
        for (line, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row?;
            let day_type: DayType = row.day_type.parse()?;
            let idx = IntervalIndex::new(row.month, day_type, row.hour).map_err(|e| {
                HcError::InvalidArgument(format!("profile row {}: {e}", line + 2))
            })?;
            partial
                .entry(row.profile_id)
                .or_insert_with(|| vec![None; GRID_LEN])[idx.ordinal()] = Some(row.value);
        }
        let mut lib = ProfileLibrary::new(kind);
        for (id, values) in partial {
            let missing = values.iter().filter(|v| v.is_none()).count();
            if missing > 0 {
                return Err(HcError::InvalidArgument(format!(
                    "profile `{id}` is missing {missing} intervals"
                )));
            }
            lib.insert(id, values.into_iter().map(Option::unwrap).collect())?;
        }
        Ok(lib)
    }

    pub fn to_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (id, shape) in &self.shapes {
            for i in IntervalIndex::all() {
                w.serialize(Row {
                    profile_id: id.clone(),
                    month: i.month,
                    day_type: match i.day_type {
                        DayType::Weekday => "weekday".into(),
                        DayType::Weekend => "weekend".into(),
                    },
                    hour: i.hour,
                    value: shape[i.ordinal()],
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Residential and commercial load shapes shipped with the crate.
    pub fn builtin_load() -> Self {
        Self::from_csv(ProfileKind::Load, BUILTIN_LOAD.as_bytes()).expect("bundled load shapes")
    }

    /// Residential and commercial PV shapes, January maximum 1.
    pub fn builtin_pv() -> Self {
        Self::from_csv(ProfileKind::Pv, BUILTIN_PV.as_bytes()).expect("bundled pv shapes")
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.shapes.keys().map(String::as_str)
    }

    pub fn get(&self, id: &str) -> Result<&Shape> {
        self.shapes
            .get(id)
            .ok_or_else(|| HcError::MissingProfile(id.to_string()))
    }

    pub fn value(&self, id: &str, interval: IntervalIndex) -> Result<f64> {
        Ok(self.get(id)?[interval.ordinal()])
    }

    /// Resolves `name` or `name@ratio`; the latter maps the shape onto
    /// `[ratio, 1]` so the minimum-to-peak ratio is `ratio`.
    pub fn resolve(&self, profile_id: &str) -> Result<Shape> {
        match profile_id.split_once('@') {
            None => self.get(profile_id).cloned(),
            Some((name, ratio)) => {
                let r: f64 = ratio.parse().map_err(|_| {
                    HcError::InvalidArgument(format!("bad ratio in profile id `{profile_id}`"))
                })?;
                if !(0.0..=1.0).contains(&r) {
                    return Err(HcError::InvalidArgument(format!(
                        "ratio in `{profile_id}` must lie in [0, 1]"
                    )));
                }
                Ok(self.get(name)?.iter().map(|v| r + (1.0 - r) * v).collect())
            }
        }
    }
}
