//! Dataset manifests, per-device accuracy reports and prediction overlap.

mod manifest;

use serde::Serialize;

use crate::fusion::argmax;
use crate::{Error, Result};

pub use manifest::{DatasetManifest, ManifestRow};

/// Device groups of the evaluation table. Devices outside the four named
/// groups (unseen simulated devices, unlabeled rows) go to `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum DeviceGroup {
    #[serde(rename = "A")]
    A,
    #[serde(rename = "B&C")]
    BC,
    #[serde(rename = "s1-s3")]
    S1S3,
    #[serde(rename = "s4-s6")]
    S4S6,
    #[serde(rename = "other")]
    Other,
}

impl DeviceGroup {
    pub const ALL: [DeviceGroup; 5] = [
        DeviceGroup::A,
        DeviceGroup::BC,
        DeviceGroup::S1S3,
        DeviceGroup::S4S6,
        DeviceGroup::Other,
    ];

    pub fn of(device: &str) -> Self {
        match device.trim().to_ascii_lowercase().as_str() {
            "a" => DeviceGroup::A,
            "b" | "c" => DeviceGroup::BC,
            "s1" | "s2" | "s3" => DeviceGroup::S1S3,
            "s4" | "s5" | "s6" => DeviceGroup::S4S6,
            _ => DeviceGroup::Other,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DeviceGroup::A => "A",
            DeviceGroup::BC => "B&C",
            DeviceGroup::S1S3 => "s1-s3",
            DeviceGroup::S4S6 => "s4-s6",
            DeviceGroup::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupAccuracy {
    pub group: DeviceGroup,
    pub items: usize,
    pub correct: usize,
    /// `None` when the group has no items.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub items: usize,
    pub groups: Vec<GroupAccuracy>,
    /// Item-weighted accuracy in percent.
    pub accuracy: f64,
    /// Unweighted mean over non-empty device groups, in percent.
    pub group_mean_accuracy: f64,
    /// Mean cross-entropy of the true class.
    pub val_loss: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Per-class recall in percent; `None` for classes with no items.
    pub per_class_accuracy: Vec<Option<f64>>,
}

const PROB_FLOOR: f64 = 1e-12;

fn pct(correct: usize, n: usize) -> f64 {
    100.0 * correct as f64 / n as f64
}

/// Score one prediction per manifest row against its scene label.
/// `classes` fixes the score-vector order.
pub fn evaluate(
    predictions: &[Vec<f32>],
    manifest: &DatasetManifest,
    classes: &[String],
) -> Result<EvalReport> {
    let rows = manifest.rows();
    if rows.is_empty() {
        return Err(Error::InvalidInput("empty manifest".into()));
    }
    if predictions.len() != rows.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} manifest rows",
            predictions.len(),
            rows.len()
        )));
    }
    let k = classes.len();
    let mut confusion = vec![vec![0usize; k]; k];
    let mut group_n = [0usize; 5];
    let mut group_ok = [0usize; 5];
    let mut losses = Vec::with_capacity(rows.len());
    for (i, (row, p)) in rows.iter().zip(predictions).enumerate() {
        if p.len() != k {
            return Err(Error::Shape(format!(
                "prediction {i} has {} scores for {k} classes",
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("prediction {i} is not finite")));
        }
        let t = classes
            .iter()
            .position(|c| *c == row.scene_label)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "row {i} ({}): unknown scene label {:?}",
                    row.filename, row.scene_label
                ))
            })?;
        let y = argmax(p);
        confusion[t][y] += 1;
        let g = DeviceGroup::of(&row.source_label) as usize;
        group_n[g] += 1;
        group_ok[g] += usize::from(t == y);
        losses.push(-f64::from(p[t]).max(PROB_FLOOR).ln());
    }
    // summing in sorted order keeps the loss independent of row order
    losses.sort_by(f64::total_cmp);
    let val_loss = losses.iter().sum::<f64>() / losses.len() as f64;

    let groups: Vec<GroupAccuracy> = DeviceGroup::ALL
        .iter()
        .map(|&g| {
            let (n, c) = (group_n[g as usize], group_ok[g as usize]);
            GroupAccuracy {
                group: g,
                items: n,
                correct: c,
                accuracy: (n > 0).then(|| pct(c, n)),
            }
        })
        .collect();
    let correct: usize = group_ok.iter().sum();
    let present: Vec<f64> = groups.iter().filter_map(|g| g.accuracy).collect();
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(t, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| pct(row[t], n))
        })
        .collect();
    Ok(EvalReport {
        classes: classes.to_vec(),
        items: rows.len(),
        groups,
        accuracy: pct(correct, rows.len()),
        group_mean_accuracy: present.iter().sum::<f64>() / present.len() as f64,
        val_loss,
        confusion,
        per_class_accuracy,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |a| format!("{a:.1}"))
}

impl EvalReport {
    pub fn group(&self, g: DeviceGroup) -> &GroupAccuracy {
        &self.groups[g as usize]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Human-readable report: the per-device summary row, then per-class
    /// accuracy and the confusion matrix.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let mut head = Vec::new();
        let mut vals = Vec::new();
        for g in &self.groups {
            if g.group == DeviceGroup::Other && g.items == 0 {
                continue;
            }
            head.push(format!("{} acc. %", g.group.label()));
            vals.push(cell(g.accuracy));
        }
        head.push("val loss".into());
        vals.push(format!("{:.3}", self.val_loss));
        head.push("Avg acc. %".into());
        vals.push(format!("{:.1}", self.accuracy));
        head.push("Group avg acc. %".into());
        vals.push(format!("{:.1}", self.group_mean_accuracy));
        let widths: Vec<usize> = head.iter().map(|h| h.len().max(6)).collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join(" | ")
        };
        s.push_str(&line(&head));
        s.push('\n');
        s.push_str(&line(&vals));
        s.push_str(&format!("\n\n{} items\n\nclass accuracy\n", self.items));
        let name_w = self
            .classes
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(5)
            .max(5);
        for (c, a) in self.classes.iter().zip(&self.per_class_accuracy) {
            s.push_str(&format!("{c:<name_w$} {:>6}\n", cell(*a)));
        }
        s.push_str("\nconfusion (rows true, columns predicted)\n");
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            s.push_str(&format!("{c:<name_w$}"));
            for v in row {
                s.push_str(&format!(" {v:>5}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Percentage of items on which two systems predict the same class.
pub fn prediction_overlap(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "prediction lists differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("empty prediction lists".into()));
    }
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(pct(same, a.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    fn manifest(rows: &[(&str, &str)]) -> DatasetManifest {
        DatasetManifest::new(
            rows.iter()
                .enumerate()
                .map(|(i, (label, dev))| ManifestRow {
                    filename: format!("audio/{i}.wav"),
                    scene_label: label.to_string(),
                    source_label: dev.to_string(),
                    split: None,
                })
                .collect(),
        )
    }

    fn one_hot(k: usize, i: usize) -> Vec<f32> {
        let mut v = vec![0.0; k];
        v[i] = 1.0;
        v
    }

    #[test]
    fn all_correct() {
        let m = manifest(&[("c0", "a"), ("c1", "b"), ("c2", "s2"), ("c0", "s5")]);
        let p: Vec<Vec<f32>> = [0, 1, 2, 0].iter().map(|&i| one_hot(3, i)).collect();
        let r = evaluate(&p, &m, &classes(3)).unwrap();
        assert_eq!(r.accuracy, 100.0);
        assert!(r.val_loss.abs() < 1e-12);
        for g in &r.groups[..4] {
            assert_eq!(g.accuracy, Some(100.0));
        }
        assert_eq!(r.group(DeviceGroup::Other).accuracy, None);
    }

    #[test]
    fn uniform_scores_give_ln_k() {
        let rows: Vec<(String, &str)> = (0..10).map(|i| (format!("c{i}"), "a")).collect();
        let rows: Vec<(&str, &str)> = rows.iter().map(|(a, b)| (a.as_str(), *b)).collect();
        let m = manifest(&rows);
        let p = vec![vec![0.1f32; 10]; 10];
        let r = evaluate(&p, &m, &classes(10)).unwrap();
        assert!((r.val_loss - 10f64.ln()).abs() < 1e-6);
        // ties go to class 0, which is right once in ten
        assert_eq!(r.accuracy, 10.0);
    }

    #[test]
    fn hand_built_six_items() {
        // A: 2 items, 1 right; B&C: 2 items, 2 right; s1-s3: 1 wrong; s4-s6: 1 right
        let m = manifest(&[
            ("c0", "a"),
            ("c1", "a"),
            ("c1", "b"),
            ("c2", "c"),
            ("c0", "s3"),
            ("c2", "s6"),
        ]);
        let p: Vec<Vec<f32>> = [0, 2, 1, 2, 1, 2].iter().map(|&i| one_hot(3, i)).collect();
        let r = evaluate(&p, &m, &classes(3)).unwrap();
        assert_eq!(r.group(DeviceGroup::A).accuracy, Some(50.0));
        assert_eq!(r.group(DeviceGroup::BC).accuracy, Some(100.0));
        assert_eq!(r.group(DeviceGroup::S1S3).accuracy, Some(0.0));
        assert_eq!(r.group(DeviceGroup::S4S6).accuracy, Some(100.0));
        assert!((r.accuracy - 400.0 / 6.0).abs() < 1e-12);
        assert!((r.group_mean_accuracy - 62.5).abs() < 1e-12);
        assert_eq!(
            r.confusion,
            vec![vec![1, 1, 0], vec![0, 1, 1], vec![0, 0, 2]]
        );
        assert_eq!(
            r.per_class_accuracy,
            vec![Some(50.0), Some(50.0), Some(100.0)]
        );
        let table = r.to_table();
        assert!(table.contains("B&C acc. %") && table.contains("Avg acc. %"));
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["groups"][1]["group"], "B&C");
    }

    #[test]
    fn unknown_devices_get_their_own_row() {
        let m = manifest(&[("c0", "s9"), ("c0", "")]);
        let p = vec![one_hot(2, 0), one_hot(2, 1)];
        let r = evaluate(&p, &m, &classes(2)).unwrap();
        assert_eq!(r.group(DeviceGroup::Other).items, 2);
        assert_eq!(r.group(DeviceGroup::Other).accuracy, Some(50.0));
        assert!(r.to_table().contains("other acc. %"));
    }

    #[test]
    fn errors() {
        let m = manifest(&[("c0", "a"), ("zz", "a")]);
        assert!(evaluate(&[one_hot(2, 0)], &m, &classes(2)).is_err());
        assert!(evaluate(&[one_hot(2, 0), one_hot(2, 0)], &m, &classes(2)).is_err());
        assert!(evaluate(&[], &DatasetManifest::new(vec![]), &classes(2)).is_err());
    }

    #[test]
    fn overlap() {
        let a: Vec<usize> = (0..100).map(|i| i % 10).collect();
        assert_eq!(prediction_overlap(&a, &a).unwrap(), 100.0);
        let b: Vec<usize> = a.iter().map(|v| v + 1).collect();
        assert_eq!(prediction_overlap(&a, &b).unwrap(), 0.0);
        let mut c = a.clone();
        for v in &mut c[77..] {
            *v += 1;
        }
        assert_eq!(prediction_overlap(&a, &c).unwrap(), 77.0);
        assert_eq!(prediction_overlap(&c, &a).unwrap(), 77.0);
        assert!(prediction_overlap(&a, &a[1..]).is_err());
    }
}
