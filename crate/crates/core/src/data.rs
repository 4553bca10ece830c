//! Core data types: a datum is one user's feature vector plus label.

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Prediction target: a categorical class id or a real-valued response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Label {
    Class(usize),
    Real(f64),
}

impl Label {
    pub fn class(&self) -> Option<usize> {
        match self {
            Label::Class(c) => Some(*c),
            Label::Real(_) => None,
        }
    }

    pub fn real(&self) -> Option<f64> {
        match self {
            Label::Real(v) => Some(*v),
            Label::Class(_) => None,
        }
    }
}

/// One user's feature vector and label; the unit of competition feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Datum {
    pub features: Vec<f64>,
    pub label: Label,
}

impl Datum {
    pub fn class(features: Vec<f64>, class: usize) -> Self {
        Datum { features, label: Label::Class(class) }
    }

    pub fn real(features: Vec<f64>, y: f64) -> Self {
        Datum { features, label: Label::Real(y) }
    }
}

/// An in-memory collection of data with a constant feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub data: Vec<Datum>,
    pub feature_dim: usize,
    /// Number of classes for classification tasks; 0 for regression.
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(data: Vec<Datum>, num_classes: usize) -> Result<Self, Error> {
        let feature_dim = data.first().map(|d| d.features.len()).unwrap_or(0);
        for (i, d) in data.iter().enumerate() {
            if d.features.len() != feature_dim {
                return Err(Error::invalid(format!(
                    "datum {i} has dimension {} but dataset has {feature_dim}",
                    d.features.len()
                )));
            }
            if let Label::Class(c) = d.label {
                if c >= num_classes {
                    return Err(Error::invalid(format!(
                        "datum {i} has class {c} outside [0, {num_classes})"
                    )));
                }
            }
        }
        Ok(Dataset { data, feature_dim, num_classes })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}
