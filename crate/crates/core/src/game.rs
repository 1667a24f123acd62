//! Finite exact-potential games over candidate strategies.
//!
//! Every player shares the best quality bit in the profile and adds a
//! weighted private role score, so `Φ = max_k Q + λ Σ_k R_k` tracks each
//! unilateral deviation exactly.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{Num, Signed};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DEVIATION_CAP: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invalid game: {0}")]
    Invalid(String),
    #[error("player {player} has no strategy {strategy}")]
    InvalidProfile { player: usize, strategy: usize },
    #[error("profile has {got} choices for {expected} players")]
    ProfileLength { got: usize, expected: usize },
    #[error("no player {0}")]
    InvalidPlayer(usize),
    #[error("enumeration needs {attempted} deviations, cap is {cap}")]
    CapExceeded { attempted: u64, cap: u64 },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, GameError>;

/// Numeric type usable for game payoffs.
pub trait Scalar: Num + Signed + Clone + PartialOrd + Debug {}
impl<T: Num + Signed + Clone + PartialOrd + Debug> Scalar for T {}

/// Strategy `s` of player `k` carries a quality bit and a role score.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteGame<T> {
    pub lambda: T,
    /// `quality[k][s]`
    pub quality: Vec<Vec<bool>>,
    /// `role_score[k][s]`
    pub role_score: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Profile {
    pub choice: Vec<usize>,
}

impl Profile {
    pub fn new(choice: Vec<usize>) -> Self {
        Self { choice }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step<T> {
    pub player: usize,
    pub from: usize,
    pub to: usize,
    pub potential: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTrace<T> {
    pub steps: Vec<Step<T>>,
    pub terminal: Profile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport<T> {
    pub deviations_checked: u64,
    pub max_discrepancy: T,
    /// First deviation reaching `max_discrepancy`, when it is nonzero.
    pub worst: Option<(Profile, usize, usize)>,
}

impl<T: Scalar> VerificationReport<T> {
    pub fn passed_exact(&self) -> bool {
        self.max_discrepancy.is_zero()
    }
}

impl VerificationReport<f64> {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_discrepancy <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateOrder {
    RoundRobin,
    /// Players revised in a fresh random permutation each sweep.
    Random {
        seed: u64,
    },
}

impl<T: Scalar> FiniteGame<T> {
    pub fn new(lambda: T, quality: Vec<Vec<bool>>, role_score: Vec<Vec<T>>) -> Result<Self> {
        let game = Self {
            lambda,
            quality,
            role_score,
        };
        game.validate()?;
        Ok(game)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_negative() {
            return Err(GameError::Invalid("lambda must be nonnegative".into()));
        }
        if self.quality.is_empty() {
            return Err(GameError::Invalid("game has no players".into()));
        }
        if self.quality.len() != self.role_score.len() {
            return Err(GameError::Invalid(
                "quality and role score tables disagree on player count".into(),
            ));
        }
        for (k, (q, r)) in self.quality.iter().zip(&self.role_score).enumerate() {
            if q.is_empty() {
                return Err(GameError::Invalid(format!("player {k} has no strategies")));
            }
            if q.len() != r.len() {
                return Err(GameError::Invalid(format!(
                    "player {k} has {} quality entries and {} role scores",
                    q.len(),
                    r.len()
                )));
            }
        }
        Ok(())
    }

    pub fn k_players(&self) -> usize {
        self.quality.len()
    }

    pub fn strategy_count(&self, player: usize) -> usize {
        self.quality[player].len()
    }

    pub fn check_profile(&self, profile: &Profile) -> Result<()> {
        if profile.choice.len() != self.k_players() {
            return Err(GameError::ProfileLength {
                got: profile.choice.len(),
                expected: self.k_players(),
            });
        }
        for (player, &strategy) in profile.choice.iter().enumerate() {
            if strategy >= self.strategy_count(player) {
                return Err(GameError::InvalidProfile { player, strategy });
            }
        }
        Ok(())
    }

    fn max_quality(&self, profile: &Profile) -> T {
        let any = profile.choice.iter().enumerate().any(|(k, &s)| self.quality[k][s]);
        if any {
            T::one()
        } else {
            T::zero()
        }
    }

    pub fn potential(&self, profile: &Profile) -> Result<T> {
        self.check_profile(profile)?;
        Ok(self.potential_unchecked(profile))
    }

    fn potential_unchecked(&self, profile: &Profile) -> T {
        let roles = profile
            .choice
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (k, &s)| acc + self.role_score[k][s].clone());
        self.max_quality(profile) + self.lambda.clone() * roles
    }

    pub fn utility(&self, player: usize, profile: &Profile) -> Result<T> {
        if player >= self.k_players() {
            return Err(GameError::InvalidPlayer(player));
        }
        self.check_profile(profile)?;
        Ok(self.utility_unchecked(player, profile))
    }

    fn utility_unchecked(&self, player: usize, profile: &Profile) -> T {
        let own = self.role_score[player][profile.choice[player]].clone();
        self.max_quality(profile) + self.lambda.clone() * own
    }

    /// Number of (profile, player, alternative) triples, saturating.
    pub fn deviation_count(&self) -> u64 {
        let sizes: Vec<u64> = (0..self.k_players()).map(|k| self.strategy_count(k) as u64).collect();
        let profiles = sizes.iter().fold(1u64, |acc, &n| acc.saturating_mul(n));
        let alternatives: u64 = sizes.iter().map(|n| n - 1).sum();
        profiles.saturating_mul(alternatives)
    }

    /// Every profile in lexicographic order.
    pub fn profiles(&self) -> ProfileIter {
        ProfileIter {
            sizes: (0..self.k_players()).map(|k| self.strategy_count(k)).collect(),
            next: Some(vec![0; self.k_players()]),
        }
    }

    pub fn verify_exact_potential(&self, cap: u64) -> Result<VerificationReport<T>> {
        self.verify_exact_potential_with(cap, |g, k, p| g.utility_unchecked(k, p))
    }

    /// Checks `Δu_k = ΔΦ` with a caller-supplied utility.
    pub fn verify_exact_potential_with<F>(&self, cap: u64, utility: F) -> Result<VerificationReport<T>>
    where
        F: Fn(&Self, usize, &Profile) -> T,
    {
        let attempted = self.deviation_count();
        if attempted > cap {
            return Err(GameError::CapExceeded { attempted, cap });
        }
        let mut max = T::zero();
        let mut worst = None;
        let mut checked = 0u64;
        for profile in self.profiles() {
            let phi = self.potential_unchecked(&profile);
            for player in 0..self.k_players() {
                let u = utility(self, player, &profile);
                for alt in 0..self.strategy_count(player) {
                    if alt == profile.choice[player] {
                        continue;
                    }
                    let mut moved = profile.clone();
                    moved.choice[player] = alt;
                    let du = utility(self, player, &moved) - u.clone();
                    let dphi = self.potential_unchecked(&moved) - phi.clone();
                    let gap = (du - dphi).abs();
                    checked += 1;
                    if gap > max {
                        max = gap;
                        worst = Some((profile.clone(), player, alt));
                    }
                }
            }
        }
        Ok(VerificationReport {
            deviations_checked: checked,
            max_discrepancy: max,
            worst,
        })
    }

    /// Lowest-id strictly improving strategy for `player`, if any.
    pub fn best_response(&self, player: usize, profile: &Profile) -> Result<Option<usize>> {
        let current = self.utility(player, profile)?;
        let mut best: Option<(usize, T)> = None;
        let mut trial = profile.clone();
        for alt in 0..self.strategy_count(player) {
            trial.choice[player] = alt;
            let u = self.utility_unchecked(player, &trial);
            let beats_best = best.as_ref().is_none_or(|(_, b)| u > *b);
            if u > current && beats_best {
                best = Some((alt, u));
            }
        }
        Ok(best.map(|(s, _)| s))
    }

    pub fn is_nash(&self, profile: &Profile) -> Result<bool> {
        for player in 0..self.k_players() {
            if self.best_response(player, profile)?.is_some() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn best_response_dynamics(&self, initial: Profile, order: UpdateOrder) -> Result<PotentialTrace<T>> {
        self.check_profile(&initial)?;
        let mut profile = initial;
        let mut steps = Vec::new();
        let mut players: Vec<usize> = (0..self.k_players()).collect();
        let mut rng = match order {
            UpdateOrder::Random { seed } => Some(crate::simworld::WorldSeed::new(seed).stream("game.order", 0)),
            UpdateOrder::RoundRobin => None,
        };
        loop {
            if let Some(rng) = rng.as_mut() {
                players.shuffle(rng);
            }
            let mut moved = false;
            for &player in &players {
                if let Some(to) = self.best_response(player, &profile)? {
                    let from = profile.choice[player];
                    profile.choice[player] = to;
                    steps.push(Step {
                        player,
                        from,
                        to,
                        potential: self.potential_unchecked(&profile),
                    });
                    moved = true;
                }
            }
            if !moved {
                return Ok(PotentialTrace {
                    steps,
                    terminal: profile,
                });
            }
        }
    }

    /// Profile with the largest potential, first in lexicographic order.
    pub fn potential_argmax(&self) -> Profile {
        let mut best: Option<(Profile, T)> = None;
        for profile in self.profiles() {
            let phi = self.potential_unchecked(&profile);
            if best.as_ref().is_none_or(|(_, b)| phi > *b) {
                best = Some((profile, phi));
            }
        }
        best.map(|(p, _)| p).expect("games have at least one profile")
    }
}

pub struct ProfileIter {
    sizes: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for ProfileIter {
    type Item = Profile;

    fn next(&mut self) -> Option<Profile> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        for i in (0..succ.len()).rev() {
            succ[i] += 1;
            if succ[i] < self.sizes[i] {
                self.next = Some(succ);
                break;
            }
            succ[i] = 0;
        }
        Some(Profile::new(current))
    }
}

/// Random game with `k` players, up to `max_strategies` strategies each,
/// role scores `a/den` in `[0, 1]` and `λ = b/den` in `[0, 1]`.
pub fn random_rational_game<R: Rng + ?Sized>(
    rng: &mut R,
    max_players: usize,
    max_strategies: usize,
    den: i64,
) -> FiniteGame<Rational64> {
    let k = rng.random_range(1..=max_players);
    let lambda = Rational64::new(rng.random_range(0..=den), den);
    let mut quality = Vec::with_capacity(k);
    let mut role_score = Vec::with_capacity(k);
    for _ in 0..k {
        let n = rng.random_range(1..=max_strategies);
        quality.push((0..n).map(|_| rng.random::<bool>()).collect());
        role_score.push(
            (0..n)
                .map(|_| Rational64::new(rng.random_range(0..=den), den))
                .collect(),
        );
    }
    FiniteGame {
        lambda,
        quality,
        role_score,
    }
}

/// Text form: header `k <players> lambda <λ>`, then one
/// `player strategy quality role_score` line per strategy, in order.
pub fn to_text<T: Scalar + Display>(game: &FiniteGame<T>) -> String {
    let mut out = format!("k {} lambda {}\n", game.k_players(), game.lambda);
    for k in 0..game.k_players() {
        for s in 0..game.strategy_count(k) {
            out.push_str(&format!(
                "{k} {s} {} {}\n",
                u8::from(game.quality[k][s]),
                game.role_score[k][s]
            ));
        }
    }
    out
}

pub fn parse_text<T: Scalar + FromStr>(text: &str) -> Result<FiniteGame<T>> {
    parse_text_with(text, |s| s.parse().ok())
}

/// Reads `a/b`, integers and finite decimals such as `0.25` exactly.
pub fn parse_rational(s: &str) -> Option<Rational64> {
    if let Ok(r) = s.parse::<Rational64>() {
        return Some(r);
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.')?;
    if frac.is_empty() || frac.len() > 17 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let int: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let den = 10i64.checked_pow(frac.len() as u32)?;
    let num = int.checked_mul(den)?.checked_add(frac.parse::<i64>().ok()?)?;
    Some(Rational64::new(if neg { -num } else { num }, den))
}

pub fn parse_text_with<T, F>(text: &str, scalar: F) -> Result<FiniteGame<T>>
where
    T: Scalar,
    F: Fn(&str) -> Option<T>,
{
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or(GameError::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let err = |line: usize, message: &str| GameError::Parse {
        line,
        message: message.to_string(),
    };
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "k" || parts[2] != "lambda" {
        return Err(err(hline, "header must be `k <players> lambda <value>`"));
    }
    let k: usize = parts[1].parse().map_err(|_| err(hline, "bad player count"))?;
    let lambda: T = scalar(parts[3]).ok_or_else(|| err(hline, "bad lambda"))?;
    let mut quality: Vec<Vec<bool>> = vec![Vec::new(); k];
    let mut role_score: Vec<Vec<T>> = vec![Vec::new(); k];
    for (n, line) in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(err(n, "expected `player strategy quality role_score`"));
        }
        let player: usize = f[0].parse().map_err(|_| err(n, "bad player"))?;
        let strategy: usize = f[1].parse().map_err(|_| err(n, "bad strategy"))?;
        let q = match f[2] {
            "0" => false,
            "1" => true,
            _ => return Err(err(n, "quality must be 0 or 1")),
        };
        let r: T = scalar(f[3]).ok_or_else(|| err(n, "bad role score"))?;
        if player >= k {
            return Err(err(n, "player index out of range"));
        }
        if strategy != quality[player].len() {
            return Err(err(n, "strategies must be listed in order from 0"));
        }
        quality[player].push(q);
        role_score[player].push(r);
    }
    FiniteGame::new(lambda, quality, role_score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::WorldSeed;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    fn small() -> FiniteGame<Rational64> {
        FiniteGame::new(
            r(1, 10),
            vec![vec![true, false], vec![true, true], vec![false, true]],
            vec![vec![r(1, 2); 2], vec![r(1, 2); 2], vec![r(1, 2); 2]],
        )
        .unwrap()
    }

    #[test]
    fn potential_arithmetic() {
        let g = small();
        let p = Profile::new(vec![0, 0, 1]);
        assert_eq!(g.potential(&p).unwrap(), r(23, 20));
        let g0 = FiniteGame::new(r(0, 1), g.quality.clone(), g.role_score.clone()).unwrap();
        assert_eq!(g0.potential(&Profile::new(vec![1, 0, 0])).unwrap(), r(1, 1));
        assert_eq!(g0.utility(2, &Profile::new(vec![1, 0, 0])).unwrap(), r(1, 1));
    }

    #[test]
    fn rejects_bad_profiles() {
        let g = small();
        assert!(g.potential(&Profile::new(vec![0, 0])).is_err());
        assert!(g.potential(&Profile::new(vec![2, 0, 0])).is_err());
        assert!(g.utility(3, &Profile::new(vec![0, 0, 0])).is_err());
    }

    #[test]
    fn potential_is_bounded() {
        let mut rng = WorldSeed::new(7).stream("game.bound", 0);
        for _ in 0..200 {
            let g = random_rational_game(&mut rng, 4, 5, 12);
            let kmax = r(g.k_players() as i64, 1) * g.lambda;
            for p in g.profiles() {
                let phi = g.potential(&p).unwrap();
                assert!(phi >= -kmax && phi <= r(1, 1) + kmax);
            }
        }
    }

    #[test]
    fn already_nash_makes_no_moves() {
        let g = small();
        let argmax = g.potential_argmax();
        assert!(g.is_nash(&argmax).unwrap());
        let trace = g
            .best_response_dynamics(argmax.clone(), UpdateOrder::RoundRobin)
            .unwrap();
        assert!(trace.steps.is_empty());
        assert_eq!(trace.terminal, argmax);
    }

    #[test]
    fn single_player_picks_own_argmax() {
        let g = FiniteGame::new(
            r(1, 2),
            vec![vec![false, true, true]],
            vec![vec![r(1, 1), r(0, 1), r(1, 3)]],
        )
        .unwrap();
        let t = g
            .best_response_dynamics(Profile::new(vec![0]), UpdateOrder::RoundRobin)
            .unwrap();
        assert_eq!(t.terminal.choice, vec![2]);
    }

    #[test]
    fn ties_do_not_move() {
        let g = FiniteGame::new(r(0, 1), vec![vec![true, true]], vec![vec![r(0, 1), r(0, 1)]]).unwrap();
        assert_eq!(g.best_response(0, &Profile::new(vec![1])).unwrap(), None);
    }

    #[test]
    fn random_order_also_converges() {
        let mut rng = WorldSeed::new(8).stream("game.rand", 0);
        for seed in 0..100 {
            let g = random_rational_game(&mut rng, 4, 6, 7);
            let start = Profile::new(vec![0; g.k_players()]);
            let t = g.best_response_dynamics(start, UpdateOrder::Random { seed }).unwrap();
            assert!(g.is_nash(&t.terminal).unwrap());
        }
    }

    #[test]
    fn float_games_verify_within_tolerance() {
        let g = FiniteGame::new(
            0.1,
            vec![vec![true, false, false], vec![false, true]],
            vec![vec![0.3, 0.7, 0.11], vec![0.9, 0.2]],
        )
        .unwrap();
        assert!(g.verify_exact_potential(DEFAULT_DEVIATION_CAP).unwrap().passed(1e-12));
    }

    #[test]
    fn cap_is_enforced() {
        let g = small();
        assert_eq!(g.deviation_count(), 24);
        assert_eq!(
            g.verify_exact_potential(10),
            Err(GameError::CapExceeded { attempted: 24, cap: 10 })
        );
    }

    #[test]
    fn text_round_trip() {
        let g = small();
        let text = to_text(&g);
        assert!(text.starts_with("k 3 lambda 1/10\n0 0 1 1/2\n"));
        assert_eq!(parse_text::<Rational64>(&text).unwrap(), g);
        assert!(parse_text::<Rational64>("k 1 lambda 1\n0 1 1 0\n").is_err());
        assert!(parse_text::<Rational64>("players 1\n").is_err());
        let g = parse_text_with("k 1 lambda 0.1\n0 0 1 -0.25\n", parse_rational).unwrap();
        assert_eq!(g.lambda, r(1, 10));
        assert_eq!(g.role_score[0][0], r(-1, 4));
        assert_eq!(parse_rational("1/3"), Some(r(1, 3)));
        assert_eq!(parse_rational("x.5"), None);
    }
}
