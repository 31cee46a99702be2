use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::store::{LossLog, Provenance};
use super::{
    rep_loss_on_tape, Adapter, BoundAdapter, DistillError, DistilledModel, RegimeMode, TrainConfig, TrainRegime,
};
use crate::captioner::{BoundCaptioner, Captioner, CaptionerConfig, Train};
use crate::compression::CompressionRate;
use crate::features::LatentVector;
use crate::scalar::Scalar;
use crate::tensor::{Adam, Tape, Var};

// Independent streams derived from the run seed.
const INIT_STREAM: u64 = 0;
const ADAPTER_STREAM: u64 = 0x0041_4441_5054_4552;
const ORDER_STREAM: u64 = 0x004f_5244_4552;

fn derive(seed: u64, stream: u64) -> u64 {
    seed ^ stream
}

/// `(video, caption)` index pairs.
type Item = (usize, usize);

/// One differentiable objective over a fixed training set.
trait Objective<T: Scalar> {
    type Bound;

    fn loss(&self, tape: &mut Tape<T>, item: Item, rng: &mut ChaCha8Rng) -> Result<(Var, Self::Bound), DistillError>;
    fn accumulate(&mut self, tape: &Tape<T>, bound: &Self::Bound);
    fn zero_grad(&mut self);
    fn step(&mut self) -> Result<(), DistillError>;
}

/// Mini-batch training: each epoch shuffles `items`, averages the per-item
/// loss over every batch and takes one optimiser step per batch.
fn fit<T: Scalar, O: Objective<T>>(
    objective: &mut O,
    items: &[Item],
    epochs: usize,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
    split: &str,
    log: &mut LossLog,
) -> Result<(), DistillError> {
    if items.is_empty() {
        return Err(DistillError::EmptyDataset);
    }
    let mut order = items.to_vec();
    for epoch in 1..=epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(batch_size) {
            objective.zero_grad();
            let weight = T::one() / T::of(batch.len() as f64);
            for &item in batch {
                let mut tape = Tape::new();
                let (loss, bound) = objective.loss(&mut tape, item, rng)?;
                total += tape.value(loss).item().as_f64();
                let scaled = tape.scale(loss, weight)?;
                tape.backward(scaled)?;
                objective.accumulate(&tape, &bound);
            }
            objective.step()?;
        }
        log.push(epoch, split, total / order.len() as f64);
    }
    Ok(())
}

fn caption_items(captions: &[Vec<Vec<usize>>]) -> Vec<Item> {
    captions
        .iter()
        .enumerate()
        .flat_map(|(v, caps)| (0..caps.len()).map(move |c| (v, c)))
        .collect()
}

fn check_sizes<T>(latents: &[LatentVector<T>], captions: &[Vec<Vec<usize>>]) -> Result<(), DistillError> {
    if latents.is_empty() || captions.iter().all(Vec::is_empty) {
        return Err(DistillError::EmptyDataset);
    }
    if latents.len() != captions.len() {
        return Err(DistillError::InvalidConfig(format!(
            "{} latents but {} caption sets",
            latents.len(),
            captions.len()
        )));
    }
    Ok(())
}

struct CaptionObjective<'a, T> {
    captioner: Captioner<T>,
    adam: Adam<T>,
    latents: &'a [LatentVector<T>],
    captions: &'a [Vec<Vec<usize>>],
}

impl<T: Scalar> Objective<T> for CaptionObjective<'_, T> {
    type Bound = BoundCaptioner;

    fn loss(
        &self,
        tape: &mut Tape<T>,
        (v, c): Item,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Var, BoundCaptioner), DistillError> {
        let bound = self.captioner.bind(tape);
        let z = tape.constant(self.latents[v].to_tensor());
        let mut train = Train {
            dropout: self.captioner.config().dropout,
            rng,
        };
        let loss = self
            .captioner
            .loss_on_tape(tape, &bound, z, &self.captions[v][c], Some(&mut train))?;
        Ok((loss, bound))
    }

    fn accumulate(&mut self, tape: &Tape<T>, bound: &BoundCaptioner) {
        self.captioner.accumulate_grads(tape, bound);
    }

    fn zero_grad(&mut self) {
        self.captioner.params_mut().zero_grad();
    }

    fn step(&mut self) -> Result<(), DistillError> {
        Ok(self.adam.step(self.captioner.params_mut())?)
    }
}

struct RepObjective<'a, T> {
    adapter: Adapter<T>,
    adam: Adam<T>,
    student: &'a [LatentVector<T>],
    teacher: &'a [LatentVector<T>],
}

impl<T: Scalar> Objective<T> for RepObjective<'_, T> {
    type Bound = BoundAdapter;

    fn loss(&self, tape: &mut Tape<T>, (v, _): Item, _: &mut ChaCha8Rng) -> Result<(Var, BoundAdapter), DistillError> {
        let bound = self.adapter.bind(tape);
        let s = tape.constant(self.student[v].to_tensor());
        let (loss, _) = rep_loss_on_tape(tape, &self.adapter, &bound, s, &self.teacher[v])?;
        Ok((loss, bound))
    }

    fn accumulate(&mut self, tape: &Tape<T>, bound: &BoundAdapter) {
        self.adapter.accumulate_grads(tape, bound);
    }

    fn zero_grad(&mut self) {
        self.adapter.params_mut().zero_grad();
    }

    fn step(&mut self) -> Result<(), DistillError> {
        Ok(self.adam.step(self.adapter.params_mut())?)
    }
}

struct JointObjective<'a, T> {
    captioner: Captioner<T>,
    adapter: Adapter<T>,
    adam_captioner: Adam<T>,
    adam_adapter: Adam<T>,
    lambda: T,
    student: &'a [LatentVector<T>],
    teacher: &'a [LatentVector<T>],
    captions: &'a [Vec<Vec<usize>>],
}

/// `CE + lambda * rep` for one caption of one clip, along with both terms.
#[allow(clippy::too_many_arguments)]
pub fn joint_loss_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    captioner: &Captioner<T>,
    bound_captioner: &BoundCaptioner,
    adapter: &Adapter<T>,
    bound_adapter: &BoundAdapter,
    student: &LatentVector<T>,
    teacher: &LatentVector<T>,
    caption: &[usize],
    lambda: T,
    train: Option<&mut Train<'_, ChaCha8Rng>>,
) -> Result<(Var, Var, Var), DistillError> {
    let s = tape.constant(student.to_tensor());
    let (rep, adapted) = rep_loss_on_tape(tape, adapter, bound_adapter, s, teacher)?;
    let ce = captioner.loss_on_tape(tape, bound_captioner, adapted, caption, train)?;
    let weighted = tape.scale(rep, lambda)?;
    let total = tape.add(ce, weighted)?;
    Ok((total, ce, rep))
}

impl<T: Scalar> Objective<T> for JointObjective<'_, T> {
    type Bound = (BoundCaptioner, BoundAdapter);

    fn loss(&self, tape: &mut Tape<T>, (v, c): Item, rng: &mut ChaCha8Rng) -> Result<(Var, Self::Bound), DistillError> {
        let bc = self.captioner.bind(tape);
        let ba = self.adapter.bind(tape);
        let mut train = Train {
            dropout: self.captioner.config().dropout,
            rng,
        };
        let (total, _, _) = joint_loss_on_tape(
            tape,
            &self.captioner,
            &bc,
            &self.adapter,
            &ba,
            &self.student[v],
            &self.teacher[v],
            &self.captions[v][c],
            self.lambda,
            Some(&mut train),
        )?;
        Ok((total, (bc, ba)))
    }

    fn accumulate(&mut self, tape: &Tape<T>, (bc, ba): &Self::Bound) {
        self.captioner.accumulate_grads(tape, bc);
        self.adapter.accumulate_grads(tape, ba);
    }

    fn zero_grad(&mut self) {
        self.captioner.params_mut().zero_grad();
        self.adapter.params_mut().zero_grad();
    }

    fn step(&mut self) -> Result<(), DistillError> {
        self.adam_captioner.step(self.captioner.params_mut())?;
        self.adam_adapter.step(self.adapter.params_mut())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedTeacher<T> {
    pub captioner: Captioner<T>,
    pub log: LossLog,
}

/// Trains a captioner with cross-entropy on the given latents. Used for the
/// teacher and for the second phase of representation-only students.
pub fn train_captioner<T: Scalar>(
    latents: &[LatentVector<T>],
    captions: &[Vec<Vec<usize>>],
    captioner_config: CaptionerConfig,
    config: &TrainConfig,
    seed: u64,
    split: &str,
    log: &mut LossLog,
) -> Result<Captioner<T>, DistillError> {
    check_sizes(latents, captions)?;
    config.validate()?;
    let mut objective = CaptionObjective {
        captioner: Captioner::new(captioner_config, derive(seed, INIT_STREAM))?,
        adam: Adam::new(config.adam),
        latents,
        captions,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, ORDER_STREAM));
    fit(
        &mut objective,
        &caption_items(captions),
        config.epochs,
        config.batch_size,
        &mut rng,
        split,
        log,
    )?;
    Ok(objective.captioner)
}

/// Cross-entropy training of the teacher on uncompressed latents.
pub fn train_teacher<T: Scalar>(
    latents: &[LatentVector<T>],
    captions: &[Vec<Vec<usize>>],
    captioner_config: CaptionerConfig,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainedTeacher<T>, DistillError> {
    let mut log = LossLog::default();
    let captioner = train_captioner(latents, captions, captioner_config, config, seed, "train", &mut log)?;
    Ok(TrainedTeacher { captioner, log })
}

/// Representation-only training of a fresh adapter (hidden width = teacher
/// latent size).
pub fn train_adapter<T: Scalar>(
    student: &[LatentVector<T>],
    teacher: &[LatentVector<T>],
    config: &TrainConfig,
    seed: u64,
    log: &mut LossLog,
) -> Result<Adapter<T>, DistillError> {
    if student.is_empty() {
        return Err(DistillError::EmptyDataset);
    }
    if student.len() != teacher.len() {
        return Err(DistillError::InvalidConfig(format!(
            "{} student latents but {} teacher latents",
            student.len(),
            teacher.len()
        )));
    }
    config.validate()?;
    let (d_s, d_t) = (student[0].len(), teacher[0].len());
    let mut objective = RepObjective {
        adapter: Adapter::new(d_s, d_t, d_t, derive(seed, ADAPTER_STREAM))?,
        adam: Adam::new(config.adam),
        student,
        teacher,
    };
    let items: Vec<Item> = (0..student.len()).map(|v| (v, 0)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, ORDER_STREAM ^ ADAPTER_STREAM));
    fit(
        &mut objective,
        &items,
        config.adapter_epochs,
        config.batch_size,
        &mut rng,
        "rep",
        log,
    )?;
    Ok(objective.adapter)
}

/// Trains a student on latents compressed at `k`.
///
/// `rep` mode runs two phases: the adapter learns the representation loss
/// alone, then it is frozen and a fresh captioner learns cross-entropy on the
/// adapted latents. `rep+ce` trains adapter and captioner jointly on
/// `CE + lambda_rep * rep`.
#[allow(clippy::too_many_arguments)]
pub fn train_student<T: Scalar>(
    student_latents: &[LatentVector<T>],
    teacher_latents: &[LatentVector<T>],
    captions: &[Vec<Vec<usize>>],
    captioner_config: CaptionerConfig,
    k: CompressionRate,
    regime: TrainRegime,
    config: &TrainConfig,
    seed: u64,
    teacher_id: &str,
) -> Result<(DistilledModel<T>, LossLog), DistillError> {
    regime.validate()?;
    check_sizes(student_latents, captions)?;
    check_sizes(teacher_latents, captions)?;
    config.validate()?;
    let d_t = teacher_latents[0].len();
    if captioner_config.latent_dim != d_t {
        return Err(DistillError::InvalidConfig(format!(
            "student captioner expects {}-dim latents, teacher latents have {d_t}",
            captioner_config.latent_dim
        )));
    }
    let mut log = LossLog::default();
    let provenance = Provenance {
        teacher_id: teacher_id.to_string(),
        regime,
    };
    let (adapter, captioner) = match regime.mode {
        RegimeMode::RepOnly => {
            let mut adapter = train_adapter(student_latents, teacher_latents, config, seed, &mut log)?;
            adapter.params_mut().set_trainable(false);
            let adapted = student_latents
                .iter()
                .map(|z| adapter.forward(z))
                .collect::<Result<Vec<_>, _>>()?;
            let captioner = train_captioner(&adapted, captions, captioner_config, config, seed, "train", &mut log)?;
            (adapter, captioner)
        }
        RegimeMode::RepPlusCe => {
            let d_s = student_latents[0].len();
            let mut objective = JointObjective {
                captioner: Captioner::new(captioner_config, derive(seed, INIT_STREAM))?,
                adapter: Adapter::new(d_s, d_t, d_t, derive(seed, ADAPTER_STREAM))?,
                adam_captioner: Adam::new(config.adam),
                adam_adapter: Adam::new(config.adam),
                lambda: T::of(regime.lambda_rep),
                student: student_latents,
                teacher: teacher_latents,
                captions,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, ORDER_STREAM));
            fit(
                &mut objective,
                &caption_items(captions),
                config.epochs,
                config.batch_size,
                &mut rng,
                "train",
                &mut log,
            )?;
            (objective.adapter, objective.captioner)
        }
    };
    let model = DistilledModel {
        adapter,
        captioner,
        rate: k,
        provenance,
    };
    Ok((model, log))
}
