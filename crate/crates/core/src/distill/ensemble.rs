use crate::distill::partition::SubspacePartition;
use crate::error::{Error, Result};
use crate::net::{fit_classifier, Network, TrainConfig};
use crate::tensor::Tensor;

/// Anything that maps a batch of inputs to per-class scores.
pub trait Predict {
    fn predict(&self, x: &Tensor) -> Result<Tensor>;
}

impl Predict for Network {
    fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.forward(x)
    }
}

/// `n` students bound to a partition, plus the output head applied to their
/// merged outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentEnsemble {
    partition: SubspacePartition,
    students: Vec<Option<Network>>,
    head: Network,
    head_finetuned: bool,
}

impl StudentEnsemble {
    /// Empty ensemble; students are attached with [`set_student`].
    ///
    /// [`set_student`]: StudentEnsemble::set_student
    pub fn new(partition: SubspacePartition, head: Network) -> Result<Self> {
        if head.in_dim() != partition.dense_dim() {
            return Err(Error::dim(format!(
                "head input {} does not match dense dimension {}",
                head.in_dim(),
                partition.dense_dim()
            )));
        }
        Ok(Self {
            students: vec![None; partition.len()],
            partition,
            head,
            head_finetuned: false,
        })
    }

    pub fn with_students(
        partition: SubspacePartition,
        students: Vec<Network>,
        head: Network,
    ) -> Result<Self> {
        let mut ens = Self::new(partition, head)?;
        if students.len() != ens.len() {
            return Err(Error::dim(format!(
                "{} students for {} sub-spaces",
                students.len(),
                ens.len()
            )));
        }
        for (k, s) in students.into_iter().enumerate() {
            ens.set_student(k, s)?;
        }
        Ok(ens)
    }

    pub fn set_student(&mut self, k: usize, student: Network) -> Result<()> {
        if k >= self.len() {
            return Err(Error::InvalidInput(format!("no sub-space {k}")));
        }
        if student.out_dim() != self.partition.width(k) {
            return Err(Error::dim(format!(
                "student {k} outputs {}, sub-space width is {}",
                student.out_dim(),
                self.partition.width(k)
            )));
        }
        self.students[k] = Some(student);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.partition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.students.is_empty()
    }

    pub fn partition(&self) -> &SubspacePartition {
        &self.partition
    }

    pub fn student(&self, k: usize) -> Result<&Network> {
        self.students
            .get(k)
            .and_then(Option::as_ref)
            .ok_or(Error::IncompleteEnsemble(k))
    }

    pub fn students(&self) -> Result<Vec<&Network>> {
        (0..self.len()).map(|k| self.student(k)).collect()
    }

    pub fn head(&self) -> &Network {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Network {
        &mut self.head
    }

    pub fn head_finetuned(&self) -> bool {
        self.head_finetuned
    }

    /// Merged student outputs `[batch, D]`.
    pub fn dense(&self, x: &Tensor) -> Result<Tensor> {
        let chunks = self
            .students()?
            .into_iter()
            .map(|s| s.forward(x))
            .collect::<Result<Vec<_>>>()?;
        self.partition.merge(&chunks)
    }

    /// Parameters of every student, excluding the head.
    pub fn student_param_count(&self) -> usize {
        self.students
            .iter()
            .flatten()
            .map(Network::param_count)
            .sum()
    }
}

impl Predict for StudentEnsemble {
    fn predict(&self, x: &Tensor) -> Result<Tensor> {
        predict_ensemble(self, x)
    }
}

/// `head(merge(student_1(x), ..., student_n(x)))`.
pub fn predict_ensemble(ens: &StudentEnsemble, x: &Tensor) -> Result<Tensor> {
    ens.head.forward(&ens.dense(x)?)
}

/// Fine-tune only the head on the frozen students' merged outputs.
///
/// Returns the updated ensemble and the training cross-entropy before and
/// after each epoch.
pub fn fine_tune_head(
    ens: &StudentEnsemble,
    x: &Tensor,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(StudentEnsemble, Vec<f64>)> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= ens.head.out_dim()) {
        return Err(Error::dim(format!(
            "label {bad} outside the head's {} classes",
            ens.head.out_dim()
        )));
    }
    let features = ens.dense(x)?;
    let mut out = ens.clone();
    let curve = fit_classifier(&mut out.head, &features, labels, cfg)?;
    out.head_finetuned |= cfg.epochs > 0;
    Ok((out, curve))
}

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
pub fn accuracy(scores: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    if scores.rows() != labels.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} labels",
            scores.rows(),
            labels.len()
        )));
    }
    let hits = scores
        .argmax_rows()
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Class index per row of a one-hot label matrix.
pub fn labels_from_one_hot(y: &Tensor) -> Vec<usize> {
    y.argmax_rows()
}

pub fn evaluate<P: Predict + ?Sized>(model: &P, x: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    accuracy(&model.predict(x)?, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{mlp, one_hot, LayerSpec, OptimizerKind};

    fn toy() -> (StudentEnsemble, Tensor, Vec<usize>) {
        let p = SubspacePartition::even(6, 2).unwrap();
        let head = Network::new(mlp(&[6, 3], true), 1).unwrap();
        let students = vec![
            Network::new(mlp(&[4, 5, 3], false), 2).unwrap(),
            Network::new(mlp(&[4, 5, 3], false), 3).unwrap(),
        ];
        let ens = StudentEnsemble::with_students(p, students, head).unwrap();
        let x = Tensor::matrix(8, 4, (0..32).map(|i| ((i * 7) % 11) as f32 / 11.0 - 0.5).collect())
            .unwrap();
        let y = vec![0, 1, 2, 0, 1, 2, 0, 1];
        (ens, x, y)
    }

    #[test]
    fn missing_student_is_incomplete() {
        let p = SubspacePartition::even(4, 2).unwrap();
        let head = Network::new(mlp(&[4, 2], true), 0).unwrap();
        let mut ens = StudentEnsemble::new(p, head).unwrap();
        ens.set_student(0, Network::new(mlp(&[3, 2], false), 0).unwrap()).unwrap();
        let err = predict_ensemble(&ens, &Tensor::zeros(vec![1, 3])).unwrap_err();
        assert!(matches!(err, Error::IncompleteEnsemble(1)));
    }

    #[test]
    fn student_width_checked() {
        let p = SubspacePartition::even(4, 2).unwrap();
        let head = Network::new(mlp(&[4, 2], true), 0).unwrap();
        let mut ens = StudentEnsemble::new(p, head).unwrap();
        assert!(ens.set_student(0, Network::new(mlp(&[3, 3], false), 0).unwrap()).is_err());
    }

    #[test]
    fn rows_sum_to_one() {
        let (ens, x, _) = toy();
        let p = predict_ensemble(&ens, &x).unwrap();
        for row in p.rows_iter() {
            assert!((row.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_epoch_finetune_is_noop() {
        let (ens, x, y) = toy();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let (tuned, curve) = fine_tune_head(&ens, &x, &y, &cfg).unwrap();
        assert_eq!(tuned, ens);
        assert_eq!(tuned.head().param_bytes(), ens.head().param_bytes());
        assert!(!tuned.head_finetuned());
        assert_eq!(curve.len(), 1);
    }

    #[test]
    fn finetune_freezes_students_and_descends() {
        let (ens, x, y) = toy();
        let cfg = TrainConfig {
            epochs: 15,
            batch_size: 8,
            learning_rate: 0.5,
            optimizer: OptimizerKind::Sgd,
            seed: 0,
        };
        let (tuned, curve) = fine_tune_head(&ens, &x, &y, &cfg).unwrap();
        for k in 0..2 {
            assert_eq!(
                tuned.student(k).unwrap().param_bytes(),
                ens.student(k).unwrap().param_bytes()
            );
        }
        assert_ne!(tuned.head().param_bytes(), ens.head().param_bytes());
        for w in curve.windows(2) {
            assert!(w[1] <= w[0], "{curve:?}");
        }
    }

    #[test]
    fn finetune_rejects_foreign_labels() {
        let (ens, x, mut y) = toy();
        y[0] = 3;
        assert!(matches!(
            fine_tune_head(&ens, &x, &y, &TrainConfig::default()),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn accuracy_cases() {
        let labels: Vec<usize> = (0..10).map(|i| i % 3).collect();
        let perfect = one_hot(&labels, 3).unwrap();
        assert_eq!(accuracy(&perfect, &labels).unwrap(), 1.0);
        assert_eq!(labels_from_one_hot(&perfect), labels);

        let mut half = labels.clone();
        for l in half.iter_mut().take(5) {
            *l = (*l + 1) % 3;
        }
        assert_eq!(accuracy(&perfect, &half).unwrap(), 0.5);
        assert!(matches!(accuracy(&Tensor::zeros(vec![1, 3]), &[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn evaluate_network() {
        let mut p = crate::net::DenseParams::zeros(2, 2);
        p.weights = vec![1.0, 0.0, 0.0, 1.0];
        let net = Network::from_params(vec![LayerSpec::dense(2, 2), LayerSpec::softmax(2)], vec![p]).unwrap();
        let x = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(evaluate(&net, &x, &[0, 1]).unwrap(), 1.0);
    }
}
