//! Meta-task sampling. Each task is one without-replacement split of the
//! source pool (and target pool when present), halved into support and query.
//! When a pool runs dry mid-epoch it is reshuffled and the leftover indices
//! are dropped, so no index repeats within an epoch.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Index lists into the caller's session pools.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaTask {
    pub sup_src: Vec<usize>,
    pub qry_src: Vec<usize>,
    pub sup_tgt: Vec<usize>,
    pub qry_tgt: Vec<usize>,
}

#[derive(Debug, Clone)]
struct PoolCursor {
    order: Vec<usize>,
    pos: usize,
}

impl PoolCursor {
    fn new(n: usize) -> PoolCursor {
        // First epoch starts unshuffled only until the first take; next_split
        // reshuffles on construction-equivalent state below.
        PoolCursor { order: (0..n).collect(), pos: n }
    }

    /// Takes `take` fresh indices, reshuffling into a new epoch when fewer
    /// remain. A pool smaller than `take` yields the whole pool per task.
    fn next_split(&mut self, take: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let n = self.order.len();
        if n == 0 {
            return Vec::new();
        }
        let take = take.min(n);
        if self.pos + take > n {
            shuffle(&mut self.order, rng);
            self.pos = 0;
        }
        let out = self.order[self.pos..self.pos + take].to_vec();
        self.pos += take;
        out
    }
}

/// Fisher-Yates with draws from one seeded stream; identical on every
/// platform, unlike slice shuffles tied to library versions.
pub fn shuffle(v: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..v.len()).rev() {
        let j = (rand::RngCore::next_u64(rng) % (i as u64 + 1)) as usize;
        v.swap(i, j);
    }
}

#[derive(Debug, Clone)]
pub struct TaskSampler {
    split_size: usize,
    src: PoolCursor,
    tgt: PoolCursor,
    rng: ChaCha8Rng,
}

impl TaskSampler {
    pub fn new(src_len: usize, tgt_len: usize, split_size: usize, seed: u64) -> TaskSampler {
        TaskSampler {
            split_size: split_size.max(2),
            src: PoolCursor::new(src_len),
            tgt: PoolCursor::new(tgt_len),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Support gets the first half of each split (rounded up), query the rest.
    pub fn next_task(&mut self) -> MetaTask {
        let split = |mut idx: Vec<usize>| -> (Vec<usize>, Vec<usize>) {
            let half = idx.len().div_ceil(2);
            let qry = idx.split_off(half);
            (idx, qry)
        };
        let (sup_src, qry_src) = split(self.src.next_split(self.split_size, &mut self.rng));
        let (sup_tgt, qry_tgt) = split(self.tgt.next_split(self.split_size, &mut self.rng));
        MetaTask { sup_src, qry_src, sup_tgt, qry_tgt }
    }
}
