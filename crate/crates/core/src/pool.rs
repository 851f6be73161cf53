//! Worker pools that train genomes for the master loop.
//!
//! The master submits [`Job`]s and pulls [`JobResult`]s in whatever order the
//! pool delivers them. [`SerialPool`] evaluates inline, [`ThreadPool`] runs
//! real worker threads, and [`ShuffledPool`] delivers results in a seeded
//! random order to exercise the asynchronous code paths.

use std::collections::VecDeque;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::thread::JoinHandle;

use crossbeam_channel::{Receiver, Sender};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::dataio::Sequence;
use crate::genome::RnnGenome;
use crate::network::{self, TrainerConfig};
use crate::SearchRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Job {
    /// Generation index of the genome; doubles as the job id.
    pub id: u64,
    pub genome: RnnGenome,
}

/// What a worker sends back for one genome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trained {
    /// The genome with trained weights and its fitness set.
    pub genome: RnnGenome,
    pub fitness: f64,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobResult {
    pub id: u64,
    pub outcome: Result<Trained, String>,
}

pub trait Evaluator: Send + Sync {
    fn evaluate(&self, genome: &RnnGenome) -> Result<Trained, String>;
}

impl<F> Evaluator for F
where
    F: Fn(&RnnGenome) -> Result<Trained, String> + Send + Sync,
{
    fn evaluate(&self, genome: &RnnGenome) -> Result<Trained, String> {
        self(genome)
    }
}

/// Trains with BPTT and scores by validation MAE.
#[derive(Clone, Debug)]
pub struct BpttEvaluator {
    pub train: Sequence,
    pub validation: Sequence,
    pub config: TrainerConfig,
}

impl Evaluator for BpttEvaluator {
    fn evaluate(&self, genome: &RnnGenome) -> Result<Trained, String> {
        let out = network::train(genome, &self.train, &self.validation, &self.config).map_err(|e| e.to_string())?;
        Ok(Trained {
            genome: out.genome,
            fitness: out.best_mae,
            epochs: self.config.epochs,
        })
    }
}

/// Runs the evaluator, turning a panic into a failed result.
fn run_job(evaluator: &dyn Evaluator, job: Job) -> JobResult {
    let outcome = catch_unwind(AssertUnwindSafe(|| evaluator.evaluate(&job.genome)))
        .unwrap_or_else(|_| Err("worker panicked".to_string()));
    JobResult { id: job.id, outcome }
}

pub trait WorkerPool {
    fn workers(&self) -> usize;
    fn in_flight(&self) -> usize;
    fn submit(&mut self, job: Job);
    /// Blocks until a result is available; `None` when nothing is in flight.
    fn next_result(&mut self) -> Option<JobResult>;
}

/// One worker, evaluated on the caller's thread in submission order.
pub struct SerialPool {
    evaluator: Arc<dyn Evaluator>,
    pending: VecDeque<Job>,
}

impl SerialPool {
    pub fn new(evaluator: Arc<dyn Evaluator>) -> Self {
        Self {
            evaluator,
            pending: VecDeque::new(),
        }
    }
}

impl WorkerPool for SerialPool {
    fn workers(&self) -> usize {
        1
    }

    fn in_flight(&self) -> usize {
        self.pending.len()
    }

    fn submit(&mut self, job: Job) {
        self.pending.push_back(job);
    }

    fn next_result(&mut self) -> Option<JobResult> {
        let job = self.pending.pop_front()?;
        Some(run_job(self.evaluator.as_ref(), job))
    }
}

/// `workers` threads fed through channels; results arrive as they finish.
pub struct ThreadPool {
    workers: usize,
    jobs: Option<Sender<Job>>,
    results: Receiver<JobResult>,
    handles: Vec<JoinHandle<()>>,
    in_flight: usize,
}

impl ThreadPool {
    pub fn new(evaluator: Arc<dyn Evaluator>, workers: usize) -> Self {
        assert!(workers >= 1, "a pool needs at least one worker");
        let (job_tx, job_rx) = crossbeam_channel::unbounded::<Job>();
        let (result_tx, result_rx) = crossbeam_channel::unbounded();
        let handles = (0..workers)
            .map(|_| {
                let jobs = job_rx.clone();
                let results = result_tx.clone();
                let evaluator = Arc::clone(&evaluator);
                std::thread::spawn(move || {
                    for job in jobs {
                        if results.send(run_job(evaluator.as_ref(), job)).is_err() {
                            break;
                        }
                    }
                })
            })
            .collect();
        Self {
            workers,
            jobs: Some(job_tx),
            results: result_rx,
            handles,
            in_flight: 0,
        }
    }
}

impl WorkerPool for ThreadPool {
    fn workers(&self) -> usize {
        self.workers
    }

    fn in_flight(&self) -> usize {
        self.in_flight
    }

    fn submit(&mut self, job: Job) {
        self.in_flight += 1;
        self.jobs
            .as_ref()
            .expect("pool is open")
            .send(job)
            .expect("worker threads alive");
    }

    fn next_result(&mut self) -> Option<JobResult> {
        if self.in_flight == 0 {
            return None;
        }
        let result = self.results.recv().ok()?;
        self.in_flight -= 1;
        Some(result)
    }
}

impl Drop for ThreadPool {
    fn drop(&mut self) {
        self.jobs = None;
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}

/// `workers` virtual workers whose finished results are handed back in a
/// seeded random order.
pub struct ShuffledPool {
    workers: usize,
    evaluator: Arc<dyn Evaluator>,
    ready: Vec<JobResult>,
    rng: SearchRng,
}

impl ShuffledPool {
    pub fn new(evaluator: Arc<dyn Evaluator>, workers: usize, seed: u64) -> Self {
        assert!(workers >= 1, "a pool needs at least one worker");
        Self {
            workers,
            evaluator,
            ready: Vec::new(),
            rng: SearchRng::seed_from_u64(seed),
        }
    }
}

impl WorkerPool for ShuffledPool {
    fn workers(&self) -> usize {
        self.workers
    }

    fn in_flight(&self) -> usize {
        self.ready.len()
    }

    fn submit(&mut self, job: Job) {
        self.ready.push(run_job(self.evaluator.as_ref(), job));
    }

    fn next_result(&mut self) -> Option<JobResult> {
        if self.ready.is_empty() {
            return None;
        }
        let pick = self.rng.random_range(0..self.ready.len());
        Some(self.ready.swap_remove(pick))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::CellKind;
    use crate::colony::NodeId;
    use crate::genome::{GenomeEdge, GenomeNode};

    fn genome(seed: u64) -> RnnGenome {
        RnnGenome {
            nodes: vec![
                GenomeNode { id: NodeId::new(0, 0), kind: CellKind::SimpleNeuron, params: vec![] },
                GenomeNode { id: NodeId::new(1, 0), kind: CellKind::SimpleNeuron, params: vec![0.0] },
            ],
            forward_edges: vec![GenomeEdge { src: NodeId::new(0, 0), dst: NodeId::new(1, 0), weight: 1.0 }],
            recurrent_edges: vec![],
            output_layer: 1,
            fitness: None,
            generation: seed,
            seed,
        }
    }

    fn stub() -> Arc<dyn Evaluator> {
        Arc::new(|g: &RnnGenome| {
            if g.seed == 13 {
                panic!("unlucky");
            }
            Ok(Trained { genome: g.clone(), fitness: g.seed as f64, epochs: 1 })
        })
    }

    fn drain(pool: &mut dyn WorkerPool, n: u64) -> Vec<JobResult> {
        for id in 0..n {
            pool.submit(Job { id, genome: genome(id) });
        }
        let mut out = Vec::new();
        while let Some(r) = pool.next_result() {
            out.push(r);
        }
        out
    }

    #[test]
    fn serial_pool_keeps_order() {
        let ids: Vec<u64> = drain(&mut SerialPool::new(stub()), 5).iter().map(|r| r.id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn thread_pool_returns_every_result() {
        let mut pool = ThreadPool::new(stub(), 4);
        let mut results = drain(&mut pool, 20);
        results.sort_by_key(|r| r.id);
        assert_eq!(results.len(), 20);
        assert!(results[13].outcome.is_err());
        assert_eq!(results[7].outcome.as_ref().unwrap().fitness, 7.0);
        assert_eq!(pool.in_flight(), 0);
    }

    #[test]
    fn shuffled_pool_permutes() {
        let ids: Vec<u64> = drain(&mut ShuffledPool::new(stub(), 8, 3), 30).iter().map(|r| r.id).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(sorted, (0..30).collect::<Vec<_>>());
        assert_ne!(ids, sorted);
    }
}
