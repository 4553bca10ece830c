//! Collaborative-filtering market: m bandit users choose among k
//! recommenders each round; the chosen recommender serves an item, observes
//! Bernoulli feedback drawn from a latent preference matrix, and refines an
//! online matrix factorization. The baseline variant keeps user choice but
//! trains winners on fresh i.i.d. users instead of the ones who chose them.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{make_preference_matrix, PreferenceMatrix};
use crate::error::Error;
use crate::rng::{self, SimRng};
use crate::Result;

fn default_latent_dim() -> usize {
    4
}
fn default_gamma() -> f64 {
    0.1
}
fn default_lambda() -> f64 {
    1e-4
}
fn default_generating_rank() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfParams {
    /// Number of items r.
    pub items: usize,
    /// Number of users m.
    pub users: usize,
    /// Number of competing recommenders k.
    pub k: usize,
    pub rounds: usize,
    pub rng_seed: u64,
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Rank of the Gaussian factors generating the preference matrix.
    #[serde(default = "default_generating_rank")]
    pub generating_rank: usize,
    /// Treat never-pulled arms as mean 1 instead of 0 in the user bandit.
    #[serde(default)]
    pub optimistic_unpulled: bool,
}

impl CfParams {
    pub fn new(items: usize, users: usize, k: usize, rounds: usize, rng_seed: u64) -> Self {
        CfParams {
            items,
            users,
            k,
            rounds,
            rng_seed,
            latent_dim: default_latent_dim(),
            gamma: default_gamma(),
            lambda: default_lambda(),
            generating_rank: default_generating_rank(),
            optimistic_unpulled: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.items < 1 || self.users < 1 || self.k < 1 || self.rounds < 1 {
            return Err(Error::invalid("cf market needs items, users, k, rounds >= 1"));
        }
        if self.latent_dim < 1 || self.generating_rank < 1 {
            return Err(Error::invalid("cf market needs positive ranks"));
        }
        if self.gamma < 0.0 || self.lambda < 0.0 {
            return Err(Error::invalid("gamma and lambda must be nonnegative"));
        }
        Ok(())
    }
}

/// Exploration rate after `tau` participations (the current one included).
pub fn epsilon(tau: u64) -> f64 {
    (tau as f64).powf(-0.3)
}

/// One recommender's factorization and observation history.
#[derive(Debug, Clone)]
pub struct RecommenderState {
    /// Item factors, items x latent_dim.
    pub v: Array2<f64>,
    /// User factors, users x latent_dim.
    pub w: Array2<f64>,
    /// Running mean of observed outcomes per (item, user) pair.
    pub m_hat: Array2<f64>,
    /// Observation counts per (item, user) pair.
    pub counts: Array2<u64>,
    /// Total recommendations served.
    pub served: u64,
}

impl RecommenderState {
    pub fn new(items: usize, users: usize, latent_dim: usize, rng: &mut SimRng) -> Self {
        let v = Array2::from_shape_fn((items, latent_dim), |_| rng.random::<f64>());
        let w = Array2::from_shape_fn((users, latent_dim), |_| rng.random::<f64>());
        RecommenderState {
            v,
            w,
            m_hat: Array2::zeros((items, users)),
            counts: Array2::zeros((items, users)),
            served: 0,
        }
    }

    fn score(&self, i: usize, j: usize) -> f64 {
        self.v.row(i).dot(&self.w.row(j))
    }

    /// Item with the highest factor score for user `j` (smallest index on
    /// exact ties).
    pub fn greedy_item(&self, j: usize) -> usize {
        let mut best = 0;
        for i in 1..self.v.nrows() {
            if self.score(i, j) > self.score(best, j) {
                best = i;
            }
        }
        best
    }

    /// Serves user `j`: the greedy item with probability 1 - eps, uniform
    /// otherwise, with eps = served^(-0.3) counting this round.
    pub fn recommend(&mut self, j: usize, rng: &mut SimRng) -> usize {
        self.served += 1;
        let eps = epsilon(self.served);
        if rng.random::<f64>() < eps {
            rng.random_range(0..self.v.nrows())
        } else {
            self.greedy_item(j)
        }
    }

    /// Records outcome `y` for pair (i, j) and applies one factorization
    /// step toward the updated running mean. Both row updates use the
    /// pre-update rows.
    pub fn mf_update(&mut self, i: usize, j: usize, y: f64, gamma: f64, lambda: f64) -> Result<()> {
        if i >= self.v.nrows() || j >= self.w.nrows() {
            return Err(Error::invalid(format!("pair ({i}, {j}) out of range")));
        }
        self.counts[(i, j)] += 1;
        let n = self.counts[(i, j)] as f64;
        self.m_hat[(i, j)] += (y - self.m_hat[(i, j)]) / n;

        let resid = self.m_hat[(i, j)] - self.score(i, j);
        let v_old = self.v.row(i).to_owned();
        let w_old = self.w.row(j).to_owned();
        let step = |this: ArrayView1<f64>, other: &ndarray::Array1<f64>| {
            &this + &(gamma * resid * other) - &(lambda * &this)
        };
        let v_new = step(v_old.view(), &w_old);
        let w_new = step(w_old.view(), &v_old);
        self.v.row_mut(i).assign(&v_new);
        self.w.row_mut(j).assign(&w_new);
        Ok(())
    }

    /// General-population predicted click-through rate: the mean latent
    /// preference of the item this recommender would serve each user.
    pub fn pctr(&self, preferences: &PreferenceMatrix) -> f64 {
        let users = self.w.nrows();
        let total: f64 = (0..users).map(|j| preferences.m[(self.greedy_item(j), j)]).sum();
        total / users as f64
    }
}

/// One user's epsilon-greedy bandit over recommenders.
#[derive(Debug, Clone)]
pub struct UserBanditState {
    pub pulls: Vec<u64>,
    pub reward_sums: Vec<f64>,
    /// Participation count, the current round included.
    pub tau: u64,
    optimistic: bool,
}

impl UserBanditState {
    pub fn new(k: usize, optimistic: bool) -> Self {
        UserBanditState { pulls: vec![0; k], reward_sums: vec![0.0; k], tau: 0, optimistic }
    }

    fn arm_mean(&self, a: usize) -> f64 {
        if self.pulls[a] == 0 {
            if self.optimistic { 1.0 } else { 0.0 }
        } else {
            self.reward_sums[a] / self.pulls[a] as f64
        }
    }

    /// Arms with the maximal empirical mean.
    pub fn greedy_arms(&self) -> Vec<usize> {
        let k = self.pulls.len();
        let best = (0..k).map(|a| self.arm_mean(a)).fold(f64::NEG_INFINITY, f64::max);
        (0..k).filter(|&a| self.arm_mean(a) == best).collect()
    }

    /// Picks a recommender: uniform with probability tau^(-0.3), otherwise
    /// the empirical-best arm (uniform among exact ties).
    pub fn select(&mut self, rng: &mut SimRng) -> usize {
        self.tau += 1;
        let k = self.pulls.len();
        if rng.random::<f64>() < epsilon(self.tau) {
            return rng.random_range(0..k);
        }
        let ties = self.greedy_arms();
        if ties.len() == 1 {
            ties[0]
        } else {
            ties[rng.random_range(0..ties.len())]
        }
    }

    pub fn update(&mut self, arm: usize, reward: f64) {
        self.pulls[arm] += 1;
        self.reward_sums[arm] += reward;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfRound {
    /// 1-based round index.
    pub round: usize,
    pub user: usize,
    pub recommender: usize,
    pub item: usize,
    /// Latent preference M[item, user] of the served recommendation.
    pub preference: f64,
    /// Bernoulli(preference) outcome.
    pub outcome: f64,
}

#[derive(Debug, Clone)]
pub struct CfTrace {
    pub params: CfParams,
    pub baseline: bool,
    pub preferences: PreferenceMatrix,
    pub rounds: Vec<CfRound>,
    pub recommenders: Vec<RecommenderState>,
    pub users: Vec<UserBanditState>,
}

impl PartialEq for CfTrace {
    // Rounds plus served counts pin the trace down for determinism checks.
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
            && self.baseline == other.baseline
            && self.rounds == other.rounds
            && self
                .recommenders
                .iter()
                .zip(&other.recommenders)
                .all(|(a, b)| a.served == b.served)
    }
}

impl CfTrace {
    /// Mean latent preference of the recommendations users received.
    pub fn mean_user_quality(&self) -> f64 {
        self.rounds.iter().map(|r| r.preference).sum::<f64>() / self.rounds.len() as f64
    }

    /// Recommendations served per recommender; sums to `rounds` in the
    /// competition variant.
    pub fn queries_served(&self) -> Vec<u64> {
        self.recommenders.iter().map(|r| r.served).collect()
    }

    pub fn pctrs(&self) -> Vec<f64> {
        self.recommenders.iter().map(|r| r.pctr(&self.preferences)).collect()
    }
}

/// Runs the market: winners train on the users who chose them.
pub fn run_cf_market(params: &CfParams) -> Result<CfTrace> {
    run(params, false)
}

/// Runs the control: user choice and rewards are unchanged, but each
/// winner's factorization update comes from a fresh i.i.d. user instead.
pub fn run_cf_baseline(params: &CfParams) -> Result<CfTrace> {
    run(params, true)
}

fn run(params: &CfParams, baseline: bool) -> Result<CfTrace> {
    params.validate()?;
    let mut matrix_rng = rng::substream(params.rng_seed, 0);
    let mut user_rng = rng::substream(params.rng_seed, 1);
    let mut bandit_rng = rng::substream(params.rng_seed, 2);
    let mut rec_rng = rng::substream(params.rng_seed, 3);
    let mut outcome_rng = rng::substream(params.rng_seed, 4);
    let mut fresh_rng = rng::substream(params.rng_seed, 5);

    let preferences =
        make_preference_matrix(params.items, params.users, params.generating_rank, &mut matrix_rng)?;
    let mut recommenders: Vec<RecommenderState> = (0..params.k)
        .map(|a| {
            let mut init = rng::substream(params.rng_seed, 1000 + a as u64);
            RecommenderState::new(params.items, params.users, params.latent_dim, &mut init)
        })
        .collect();
    let mut users: Vec<UserBanditState> =
        (0..params.users).map(|_| UserBanditState::new(params.k, params.optimistic_unpulled)).collect();

    let mut rounds = Vec::with_capacity(params.rounds);
    for t in 1..=params.rounds {
        let j = user_rng.random_range(0..params.users);
        let a = users[j].select(&mut bandit_rng);
        let i = recommenders[a].recommend(j, &mut rec_rng);
        let preference = preferences.m[(i, j)];
        let y = if outcome_rng.random::<f64>() < preference { 1.0 } else { 0.0 };
        users[j].update(a, y);
        if baseline {
            // Fresh i.i.d. user for the winner's training signal. The item
            // is drawn like a real serve (epsilon-greedy at the current
            // schedule) so the two modes differ only in who the winner
            // learns from; the served counter already counted this round.
            let j2 = fresh_rng.random_range(0..params.users);
            let eps = epsilon(recommenders[a].served);
            let i2 = if fresh_rng.random::<f64>() < eps {
                fresh_rng.random_range(0..params.items)
            } else {
                recommenders[a].greedy_item(j2)
            };
            let y2 = if fresh_rng.random::<f64>() < preferences.m[(i2, j2)] { 1.0 } else { 0.0 };
            recommenders[a].mf_update(i2, j2, y2, params.gamma, params.lambda)?;
        } else {
            recommenders[a].mf_update(i, j, y, params.gamma, params.lambda)?;
        }
        rounds.push(CfRound { round: t, user: j, recommender: a, item: i, preference, outcome: y });
    }

    if let Some(bad) = recommenders
        .iter()
        .find(|r| r.v.iter().chain(r.w.iter()).any(|x| !x.is_finite()))
    {
        log::error!("factorization diverged (served {} queries)", bad.served);
        return Err(Error::invalid("factorization diverged to non-finite entries"));
    }
    Ok(CfTrace { params: params.clone(), baseline, preferences, rounds, recommenders, users })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn state(items: usize, users: usize, seed: u64) -> RecommenderState {
        RecommenderState::new(items, users, 4, &mut rng::from_seed(seed))
    }

    #[test]
    fn running_mean_identity() {
        let mut s = state(3, 3, 1);
        s.mf_update(1, 2, 1.0, 0.1, 1e-4).unwrap();
        assert_eq!(s.m_hat[(1, 2)], 1.0);
        assert_eq!(s.counts[(1, 2)], 1);
        s.mf_update(1, 2, 0.0, 0.1, 1e-4).unwrap();
        assert_eq!(s.m_hat[(1, 2)], 0.5);
        // Recompute from a longer outcome log.
        let outcomes = [1.0, 1.0, 0.0, 1.0, 0.0];
        let mut s = state(2, 2, 2);
        for &y in &outcomes {
            s.mf_update(0, 0, y, 0.1, 1e-4).unwrap();
        }
        let mean = outcomes.iter().sum::<f64>() / outcomes.len() as f64;
        assert!((s.m_hat[(0, 0)] - mean).abs() < 1e-15);
    }

    #[test]
    fn update_descends_the_squared_residual() {
        let mut r = rng::from_seed(3);
        for _ in 0..100 {
            let mut s = state(4, 4, r.random());
            let i = r.random_range(0..4);
            let j = r.random_range(0..4);
            // Pin the running mean with one observation, then measure the
            // residual before and after a second update with the same y.
            let y = if r.random::<f64>() < 0.5 { 0.0 } else { 1.0 };
            s.mf_update(i, j, y, 0.0, 0.0).unwrap();
            let target = s.m_hat[(i, j)];
            let before = (target - s.v.row(i).dot(&s.w.row(j))).powi(2);
            s.mf_update(i, j, y, 0.01, 0.0).unwrap();
            let after = (target - s.v.row(i).dot(&s.w.row(j))).powi(2);
            if before > 1e-12 {
                assert!(after < before, "residual rose: {before} -> {after}");
            }
        }
    }

    #[test]
    fn mf_update_rejects_out_of_range() {
        let mut s = state(2, 3, 4);
        assert!(s.mf_update(2, 0, 1.0, 0.1, 0.0).is_err());
        assert!(s.mf_update(0, 3, 1.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn epsilon_spot_values() {
        assert_eq!(epsilon(1), 1.0);
        assert!((epsilon(1024) - 0.125).abs() < 1e-12);
    }

    #[test]
    fn first_participation_is_uniform() {
        // tau = 1 forces eps = 1: every arm is reachable on the first pull.
        let mut seen = vec![false; 4];
        for seed in 0..200 {
            let mut u = UserBanditState::new(4, false);
            seen[u.select(&mut rng::from_seed(seed))] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn greedy_arm_wins_when_exploration_is_off() {
        let mut u = UserBanditState::new(3, false);
        u.update(1, 1.0);
        u.update(0, 0.0);
        u.update(2, 0.0);
        assert_eq!(u.greedy_arms(), vec![1]);
        // Drive tau high enough that eps is negligible.
        u.tau = 1 << 40;
        for _ in 0..50 {
            assert_eq!(u.select(&mut rng::from_seed(9)), 1);
        }
    }

    #[test]
    fn unpulled_arms_default_to_zero_mean() {
        let mut u = UserBanditState::new(2, false);
        u.update(0, 1.0);
        assert_eq!(u.greedy_arms(), vec![0]);
        let mut opt = UserBanditState::new(2, true);
        opt.update(0, 1.0);
        // Optimistic variant ties the unpulled arm with the perfect one.
        assert_eq!(opt.greedy_arms(), vec![0, 1]);
    }

    #[test]
    fn single_item_is_always_recommended() {
        let mut s = state(1, 3, 5);
        let mut r = rng::from_seed(6);
        for _ in 0..20 {
            assert_eq!(s.recommend(0, &mut r), 0);
        }
    }

    #[test]
    fn greedy_item_matches_hand_set_factors() {
        let mut s = state(3, 1, 7);
        s.v.row_mut(0).fill(0.1);
        s.v.row_mut(1).fill(0.9);
        s.v.row_mut(2).fill(0.2);
        s.w.row_mut(0).fill(1.0);
        assert_eq!(s.greedy_item(0), 1);
    }

    #[test]
    fn fresh_recommender_serves_uniformly() {
        // served = 1 gives eps = 1: the first serve is a uniform item.
        let mut seen = vec![false; 5];
        for seed in 0..200 {
            let mut s = state(5, 1, 8);
            seen[s.recommend(0, &mut rng::from_seed(seed))] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn monopoly_gets_every_query() {
        let params = CfParams::new(4, 6, 1, 50, 11);
        let trace = run_cf_market(&params).unwrap();
        assert!(trace.rounds.iter().all(|r| r.recommender == 0));
        assert_eq!(trace.queries_served(), vec![50]);
    }

    #[test]
    fn market_is_deterministic_under_seed() {
        let params = CfParams::new(6, 8, 3, 200, 13);
        assert_eq!(run_cf_market(&params).unwrap(), run_cf_market(&params).unwrap());
        assert_eq!(run_cf_baseline(&params).unwrap(), run_cf_baseline(&params).unwrap());
        assert_ne!(run_cf_market(&params).unwrap(), run_cf_baseline(&params).unwrap());
    }

    #[test]
    fn query_conservation_and_finite_factors() {
        let params = CfParams::new(8, 16, 4, 1000, 17);
        let trace = run_cf_market(&params).unwrap();
        assert_eq!(trace.queries_served().iter().sum::<u64>(), 1000);
        for rec in &trace.recommenders {
            assert!(rec.v.iter().chain(rec.w.iter()).all(|x| x.is_finite()));
        }
    }

    #[test]
    fn pctr_lies_in_unit_interval() {
        let params = CfParams::new(5, 9, 2, 300, 19);
        let trace = run_cf_market(&params).unwrap();
        for p in trace.pctrs() {
            assert!((0.0..=1.0).contains(&p));
        }
        let q = trace.mean_user_quality();
        assert!((0.0..=1.0).contains(&q));
    }
}
