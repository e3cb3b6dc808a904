//! Accuracy bookkeeping and batched evaluation.

use serde::{Deserialize, Serialize};
use vqprobe_core::question::{Answer, AnswerType, QuestionFamily};
use vqprobe_nn::model::{answer_of_type, predict_answer, ReasoningModel};

use crate::data::PreparedSplit;
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyAccuracy {
    pub family: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub families: Vec<FamilyAccuracy>,
    /// Question-weighted: total correct over total questions.
    pub overall: f64,
    pub questions: usize,
    /// Share of questions whose predicted answer type was right.
    pub type_accuracy: f64,
    /// Accuracy of the answer head of the true type, bypassing the type head.
    pub head_accuracy: f64,
}

impl AccuracyTable {
    pub fn family(&self, family: QuestionFamily) -> Option<&FamilyAccuracy> {
        self.families.iter().find(|f| f.family == family.name())
    }

    /// `given_type` holds each question's answer from the head of its true type.
    pub fn tally(
        families: &[QuestionFamily],
        truth: &[(AnswerType, Answer)],
        predicted: &[(AnswerType, Answer)],
        given_type: &[Answer],
    ) -> Self {
        let mut correct = [0usize; 5];
        let mut total = [0usize; 5];
        let mut type_hits = 0;
        let mut head_hits = 0;
        for (((f, t), p), g) in families.iter().zip(truth).zip(predicted).zip(given_type) {
            total[f.index()] += 1;
            correct[f.index()] += usize::from(t.1 == p.1);
            type_hits += usize::from(t.0 == p.0);
            head_hits += usize::from(t.1 == *g);
        }
        let ratio = |c: usize, n: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
        let questions: usize = total.iter().sum();
        AccuracyTable {
            families: QuestionFamily::ALL
                .iter()
                .map(|f| FamilyAccuracy {
                    family: f.name().to_string(),
                    correct: correct[f.index()],
                    total: total[f.index()],
                    accuracy: ratio(correct[f.index()], total[f.index()]),
                })
                .collect(),
            overall: ratio(correct.iter().sum(), questions),
            questions,
            type_accuracy: ratio(type_hits, questions),
            head_accuracy: ratio(head_hits, questions),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: u64,
    pub epoch: u64,
    pub train_loss: Option<f64>,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub encoder: String,
    pub budget: usize,
    pub fraction: f64,
    pub seed: u64,
    pub train_scenes: usize,
    pub train_questions: usize,
    pub epochs: usize,
    pub iterations: u64,
    /// Validation accuracy of the final weights.
    pub val: AccuracyTable,
    pub val_loss: Option<f64>,
    pub best_epoch: Option<usize>,
    pub best_val_accuracy: Option<f64>,
    pub curve: Vec<CurvePoint>,
}

pub struct BatchOutput {
    pub answers: Vec<(AnswerType, Answer)>,
    /// Answers from the head of each question's true type.
    pub given_type: Vec<Answer>,
    /// Loss summed over the batch, for predictors that have one.
    pub loss_sum: Option<f64>,
}

pub trait Predictor: Sync {
    fn predict(&self, split: &PreparedSplit, indices: &[usize]) -> Result<BatchOutput, HarnessError>;
}

impl Predictor for ReasoningModel {
    fn predict(&self, split: &PreparedSplit, indices: &[usize]) -> Result<BatchOutput, HarnessError> {
        let truth = split.truths(indices);
        let (loss, bundles) = self.eval_loss(&split.samples(indices), &truth)?;
        Ok(BatchOutput {
            answers: bundles.iter().map(predict_answer).collect(),
            given_type: bundles.iter().zip(&truth).map(|(b, t)| answer_of_type(b, t.0)).collect(),
            loss_sum: Some(f64::from(loss) * indices.len() as f64),
        })
    }
}

/// Answers every question with its ground truth.
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn predict(&self, split: &PreparedSplit, indices: &[usize]) -> Result<BatchOutput, HarnessError> {
        let answers = split.truths(indices);
        Ok(BatchOutput {
            given_type: answers.iter().map(|a| a.1).collect(),
            answers,
            loss_sum: None,
        })
    }
}

pub struct Evaluation {
    pub table: AccuracyTable,
    pub mean_loss: Option<f64>,
    pub predictions: Vec<(AnswerType, Answer)>,
}

/// Runs `predictor` over the whole split in batches, spread over `threads`
/// workers. Output does not depend on the thread count.
pub fn evaluate<P: Predictor + ?Sized>(
    predictor: &P,
    split: &PreparedSplit,
    batch_size: usize,
    threads: usize,
) -> Result<Evaluation, HarnessError> {
    let all: Vec<usize> = (0..split.len()).collect();
    let batches: Vec<&[usize]> = all.chunks(batch_size.max(1)).collect();
    let threads = threads.clamp(1, batches.len().max(1));
    let outputs: Vec<BatchOutput> = if threads == 1 {
        batches.iter().map(|b| predictor.predict(split, b)).collect::<Result<_, _>>()?
    } else {
        let per = batches.len().div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = batches
                .chunks(per)
                .map(|group| s.spawn(move || group.iter().map(|b| predictor.predict(split, b)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("evaluation worker panicked"))
                .collect::<Result<Vec<_>, _>>()
        })?
    };
    let mut predictions = Vec::with_capacity(split.len());
    let mut given_type = Vec::with_capacity(split.len());
    let mut loss = Some(0.0);
    for out in outputs {
        predictions.extend(out.answers);
        given_type.extend(out.given_type);
        loss = loss.zip(out.loss_sum).map(|(a, b)| a + b);
    }
    let families: Vec<QuestionFamily> = split.examples.iter().map(|e| e.family).collect();
    let truth = split.truths(&all);
    Ok(Evaluation {
        table: AccuracyTable::tally(&families, &truth, &predictions, &given_type),
        mean_loss: loss.filter(|_| !split.is_empty()).map(|l| l / split.len() as f64),
        predictions,
    })
}
