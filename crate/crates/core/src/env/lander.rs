//! Closed-form 2-D lander: semi-implicit Euler, no contact dynamics beyond
//! touchdown at y <= 0. The reward decomposes into state-based (potential
//! difference), action-based (fuel) and terminal components so reward
//! variants can be re-evaluated offline from logged components.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::reward::RewardComponents;
use crate::rng;

pub const ACTION_COUNT: usize = 4;
pub const ACTION_NOOP: usize = 0;
pub const ACTION_LEFT: usize = 1;
pub const ACTION_MAIN: usize = 2;
pub const ACTION_RIGHT: usize = 3;

pub const UNION_FEATURE_NAMES: [&str; 8] =
    ["x", "y", "vx", "vy", "theta", "omega", "contact_left", "contact_right"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanderState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub theta: f64,
    pub omega: f64,
    pub contact_left: f64,
    pub contact_right: f64,
}

impl LanderState {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.x,
            self.y,
            self.vx,
            self.vy,
            self.theta,
            self.omega,
            self.contact_left,
            self.contact_right,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LanderConfig {
    pub dt: f64,
    pub gravity: f64,
    pub thrust_main: f64,
    pub thrust_side: f64,
    pub torque_side: f64,
    pub step_budget: usize,
    pub landing_bonus: f64,
    pub crash_penalty: f64,
    pub cost_main: f64,
    pub cost_side: f64,
    pub shaping_position: f64,
    pub shaping_velocity: f64,
    pub shaping_angle: f64,
    pub spawn_altitude: f64,
    pub spawn_velocity_range: f64,
    pub spawn_x_range: f64,
    pub pad_half_width: f64,
    pub landing_vy_tolerance: f64,
    pub landing_theta_tolerance: f64,
}

impl Default for LanderConfig {
    fn default() -> Self {
        LanderConfig {
            dt: 0.02,
            gravity: 1.6,
            thrust_main: 4.0,
            thrust_side: 0.4,
            torque_side: 0.05,
            step_budget: 500,
            landing_bonus: 100.0,
            crash_penalty: 100.0,
            cost_main: 0.3,
            cost_side: 0.03,
            shaping_position: 100.0,
            shaping_velocity: 100.0,
            shaping_angle: 100.0,
            spawn_altitude: 1.0,
            spawn_velocity_range: 0.5,
            spawn_x_range: 0.3,
            pad_half_width: 0.2,
            landing_vy_tolerance: 0.5,
            landing_theta_tolerance: 0.3,
        }
    }
}

impl LanderConfig {
    /// Potential used by the state-based shaping component. Negative weighted
    /// sum of position, velocity and angle magnitudes; zero at a resting
    /// touchdown on the pad center.
    pub fn shaping(&self, s: &LanderState) -> f64 {
        -(self.shaping_position * (s.x * s.x + s.y * s.y).sqrt()
            + self.shaping_velocity * (s.vx * s.vx + s.vy * s.vy).sqrt()
            + self.shaping_angle * s.theta.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: LanderState,
    pub reward: RewardComponents,
    pub done: bool,
    pub truncated: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum LanderError {
    #[error("step after episode end")]
    StepAfterDone,
    #[error("invalid action {0} (actions are 0..{})", ACTION_COUNT)]
    BadAction(usize),
}

pub struct Lander {
    cfg: LanderConfig,
    state: LanderState,
    steps: usize,
    done: bool,
    rng: rand_chacha::ChaCha8Rng,
}

impl Lander {
    pub fn new(cfg: LanderConfig, seed: u64) -> Self {
        super::assert_live_env_allowed();
        let mut lander = Lander {
            cfg,
            state: LanderState {
                x: 0.0,
                y: 0.0,
                vx: 0.0,
                vy: 0.0,
                theta: 0.0,
                omega: 0.0,
                contact_left: 0.0,
                contact_right: 0.0,
            },
            steps: 0,
            done: false,
            rng: rng::stream(seed, "lander-spawn"),
        };
        lander.reset();
        lander
    }

    /// Respawn at the configured altitude with seeded velocity perturbation.
    pub fn reset(&mut self) -> LanderState {
        let r = self.cfg.spawn_velocity_range;
        let (vx, vy) = if r == 0.0 {
            (0.0, 0.0)
        } else {
            (self.rng.gen_range(-r..=r), self.rng.gen_range(-r..=r))
        };
        let xr = self.cfg.spawn_x_range;
        let x = if xr == 0.0 { 0.0 } else { self.rng.gen_range(-xr..=xr) };
        self.state = LanderState {
            x,
            y: self.cfg.spawn_altitude,
            vx,
            vy,
            theta: 0.0,
            omega: 0.0,
            contact_left: 0.0,
            contact_right: 0.0,
        };
        self.steps = 0;
        self.done = false;
        self.state
    }

    pub fn state(&self) -> LanderState {
        self.state
    }

    pub fn config(&self) -> &LanderConfig {
        &self.cfg
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome, LanderError> {
        if self.done {
            return Err(LanderError::StepAfterDone);
        }
        if action >= ACTION_COUNT {
            return Err(LanderError::BadAction(action));
        }
        let cfg = &self.cfg;
        let s = self.state;

        let mut ax = 0.0;
        let mut ay = -cfg.gravity;
        let mut alpha = 0.0;
        let mut fuel = 0.0;
        match action {
            ACTION_MAIN => {
                // Thrust along the hull axis.
                ax += -s.theta.sin() * cfg.thrust_main;
                ay += s.theta.cos() * cfg.thrust_main;
                fuel = cfg.cost_main;
            }
            ACTION_LEFT => {
                ax += -s.theta.cos() * cfg.thrust_side;
                ay += -s.theta.sin() * cfg.thrust_side;
                alpha = cfg.torque_side;
                fuel = cfg.cost_side;
            }
            ACTION_RIGHT => {
                ax += s.theta.cos() * cfg.thrust_side;
                ay += s.theta.sin() * cfg.thrust_side;
                alpha = -cfg.torque_side;
                fuel = cfg.cost_side;
            }
            _ => {}
        }

        // Semi-implicit Euler: velocities first, then positions.
        let mut next = s;
        next.vx = s.vx + ax * cfg.dt;
        next.vy = s.vy + ay * cfg.dt;
        next.omega = s.omega + alpha * cfg.dt;
        next.x = s.x + next.vx * cfg.dt;
        next.y = s.y + next.vy * cfg.dt;
        next.theta = s.theta + next.omega * cfg.dt;

        self.steps += 1;
        let touched = next.y <= 0.0;
        let truncated = !touched && self.steps >= cfg.step_budget;
        let done = touched || truncated;

        let mut terminal = 0.0;
        if touched {
            next.y = 0.0;
            next.contact_left = 1.0;
            next.contact_right = 1.0;
            let landed = next.x.abs() < cfg.pad_half_width
                && next.vy.abs() < cfg.landing_vy_tolerance
                && next.theta.abs() < cfg.landing_theta_tolerance;
            terminal = if landed { cfg.landing_bonus } else { -cfg.crash_penalty };
        }

        let reward = RewardComponents {
            state_based: cfg.shaping(&next) - cfg.shaping(&s),
            action_based: -fuel,
            terminal,
        };

        self.state = next;
        self.done = done;
        Ok(StepOutcome { state: next, reward, done, truncated })
    }
}
