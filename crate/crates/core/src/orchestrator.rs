//! Control loops: GoalAct and the four baselines.

use crate::backend::Backend;
use crate::config::{Ablation, ConfigError, MethodKind, RunConfig};
use crate::env::{Environment, Task};
use crate::exemplars::{render_raw_actions, render_subtasks, ExemplarBank};
use crate::plan::{
    first_pending, history_of, truncate_observation, GlobalPlan, History, HistoryEntry, PlanError, SkillAction,
    SkillKind,
};
use crate::planner::{
    ask_with_repair, baseline_steps, next_step, parse_step_list, render_memory, update_global_plan, PlannerConfig,
    PlannerError, PlannerInputs,
};
use crate::prompts::{Template, CODEACT, PLAN_EXECUTE, PLAN_SOLVE, REACT, SUMMARIZE};
use crate::sandbox::GRAMMAR;
use crate::skills::{
    budget_history, dispatch, exec_searching, parse_tool_calls, render_tool_result, run_call, run_script, SkillConfig, SkillContext,
    SkillOutcome, SkillRegistry,
};
use crate::text::first_fenced_block;
use crate::trajectory::{Failure, FailureKind, Purpose, Session, TerminationReason, Trajectory};

/// Everything a run needs besides the task itself.
#[derive(Clone, Copy)]
pub struct RunContext<'a> {
    pub env: &'a Environment,
    pub backend: &'a dyn Backend,
    pub config: &'a RunConfig,
    pub exemplars: &'a ExemplarBank,
}

/// How a control loop stopped, before summarization.
struct Ending {
    reason: TerminationReason,
    step_count: u32,
    history: History,
    failure: Option<Failure>,
    fallback: Option<String>,
}

impl Ending {
    fn new(reason: TerminationReason, step_count: u32, history: History) -> Self {
        Self {
            reason,
            step_count,
            history,
            failure: None,
            fallback: None,
        }
    }

    fn fatal(step_count: u32, history: History, error: &PlannerError) -> Self {
        let kind = match error {
            PlannerError::Backend(_) => FailureKind::Backend,
            _ => FailureKind::Planning,
        };
        Self {
            failure: Some(Failure {
                kind,
                detail: error.to_string(),
            }),
            ..Self::new(TerminationReason::FatalError, step_count, history)
        }
    }
}

struct Runner<'a, 's> {
    task: &'a Task,
    ctx: RunContext<'a>,
    registry: SkillRegistry,
    skills: SkillConfig,
    planner: PlannerConfig,
    inputs: PlannerInputs,
    session: Session<'s>,
    revisions: Vec<GlobalPlan>,
}

pub fn run_task(method: MethodKind, task: &Task, ctx: RunContext<'_>) -> Result<Trajectory, ConfigError> {
    ctx.config.validate()?;
    let registry = match method {
        MethodKind::GoalAct => ctx.config.registry()?,
        _ => SkillRegistry::default(),
    };
    let memory = ctx
        .exemplars
        .select(method, &registry, ctx.config.exemplar_count);
    let inputs = PlannerInputs {
        question: task.query.clone(),
        tool_prompt: ctx.env.tool_prompt(Some(&task.tables)),
        table_prompt: ctx.env.table_prompt(&task.tables),
        memory,
    };
    let mut runner = Runner {
        task,
        ctx,
        skills: ctx.config.skill_config(),
        planner: PlannerConfig {
            max_plan_len: ctx.config.max_plan_len,
            repair_retries: ctx.config.planner_repair_retries,
        },
        registry,
        inputs,
        session: Session::new(ctx.backend, ctx.config.model.clone(), ctx.config.temperature),
        revisions: Vec::new(),
    };
    let ending = match method {
        MethodKind::GoalAct if ctx.config.ablations.contains(&Ablation::NoGlobalPlan) => runner.goalact_stepwise(),
        MethodKind::GoalAct => runner.goalact(),
        MethodKind::PlanAndSolve => runner.plan_and_solve(),
        MethodKind::PlanAndExecute => runner.plan_and_execute(),
        MethodKind::ReAct => runner.react(),
        MethodKind::CodeAct => runner.codeact(),
    };
    Ok(runner.finish(ctx.config.method_label(method), ending))
}

impl<'a, 's> Runner<'a, 's> {
    fn max_iterations(&self) -> u32 {
        self.ctx.config.max_iterations
    }

    fn budget(&self) -> usize {
        self.ctx.config.observation_budget
    }

    fn skill_ctx<'c>(&'c mut self, history: &'c History) -> SkillContext<'c, 's> {
        SkillContext {
            question: &self.task.query,
            history,
            env: self.ctx.env,
            tables: &self.task.tables,
            config: &self.skills,
            session: &mut self.session,
        }
    }

    fn run_action(&mut self, action: &SkillAction, history: &History) -> SkillOutcome {
        let registry = self.registry.clone();
        let mut ctx = self.skill_ctx(history);
        dispatch(&registry, action, &mut ctx).unwrap_or_else(|e| SkillOutcome {
            observation: e.to_string(),
            tool_calls_made: 0,
            error: None,
            payload: None,
        })
    }

    /// Runs the first pending step of `plan`. `None` means it is Finish.
    fn execute_step(&mut self, plan: &GlobalPlan, searching_only: bool) -> Result<Option<GlobalPlan>, PlanError> {
        let Some(step) = first_pending(plan).cloned() else {
            return Err(PlanError::NothingPending);
        };
        if step.action.kind.is_finish() {
            return Ok(None);
        }
        let history = history_of(plan);
        let outcome = if searching_only {
            let mut ctx = self.skill_ctx(&history);
            exec_searching(&step.action.objective, &mut ctx)
        } else {
            self.run_action(&step.action, &history)
        };
        let observation = truncate_observation(&outcome.observation, self.budget());
        plan.with_first_executed(observation, outcome.payload).map(Some)
    }

    fn goalact(&mut self) -> Ending {
        let mut plan: Option<GlobalPlan> = None;
        for t in 1..=self.max_iterations() {
            self.session.step = t;
            let current = match update_global_plan(
                &self.inputs,
                &self.registry,
                plan.as_ref(),
                &mut self.session,
                &self.planner,
            ) {
                Ok(g) => g,
                Err(e) => return Ending::fatal(t, plan.as_ref().map(history_of).unwrap_or_default(), &e),
            };
            self.revisions.push(current.clone());
            match self.execute_step(&current, false) {
                Ok(Some(next)) => plan = Some(next),
                Ok(None) => return Ending::new(TerminationReason::Finish, t, history_of(&current)),
                Err(e) => {
                    let err = PlannerError::PlanningFailed {
                        attempts: 1,
                        last: e.to_string(),
                    };
                    return Ending::fatal(t, history_of(&current), &err);
                }
            }
        }
        let history = plan.as_ref().map(history_of).unwrap_or_default();
        Ending::new(TerminationReason::MaxIterations, self.max_iterations(), history)
    }

    fn goalact_stepwise(&mut self) -> Ending {
        let mut history = History::default();
        for t in 1..=self.max_iterations() {
            self.session.step = t;
            let (thought, action) =
                match next_step(&self.inputs, &self.registry, &history, &mut self.session, &self.planner) {
                    Ok(s) => s,
                    Err(e) => return Ending::fatal(t, history, &e),
                };
            if action.kind.is_finish() {
                return Ending::new(TerminationReason::Finish, t, history);
            }
            let outcome = self.run_action(&action, &history);
            let mut action = action;
            if outcome.payload.is_some() {
                action.payload = outcome.payload;
            }
            history.push(HistoryEntry {
                thought,
                action,
                observation: truncate_observation(&outcome.observation, self.budget()),
            });
        }
        Ending::new(TerminationReason::MaxIterations, self.max_iterations(), history)
    }

    fn baseline_prompt(&self, template: &Template, scratchpad: &str) -> String {
        template
            .render(&[
                ("table_used_prompt", &self.inputs.table_prompt),
                ("tool_prompt", &self.inputs.tool_prompt),
                ("memory", &render_memory(&self.inputs.memory)),
                ("question", &self.task.query),
                ("scratchpad", scratchpad),
                ("grammar", GRAMMAR),
            ])
            .expect("baseline template slots are fixed")
    }

    fn ask_steps(&mut self, purpose: Purpose, prompt: String) -> Result<Vec<(String, String)>, PlannerError> {
        ask_with_repair(&mut self.session, purpose, prompt, self.planner.repair_retries, |raw| {
            parse_step_list(raw, "Step").map_err(|e| e.to_string())
        })
    }

    fn plan_and_solve(&mut self) -> Ending {
        self.session.step = 1;
        let prompt = self.baseline_prompt(&PLAN_SOLVE, "");
        let pairs = match self.ask_steps(Purpose::Planning, prompt) {
            Ok(p) => p,
            Err(e) => return Ending::fatal(1, History::default(), &e),
        };
        let mut plan = GlobalPlan::from_pending(baseline_steps(pairs, self.planner.max_plan_len), 1);
        self.revisions.push(plan.clone());
        for t in 1..=self.max_iterations() {
            self.session.step = t;
            match self.execute_step(&plan, true) {
                Ok(Some(next)) => plan = next,
                _ => return Ending::new(TerminationReason::Finish, t, history_of(&plan)),
            }
        }
        Ending::new(TerminationReason::MaxIterations, self.max_iterations(), history_of(&plan))
    }

    fn plan_and_execute(&mut self) -> Ending {
        let mut plan = GlobalPlan {
            revision: 0,
            steps: Vec::new(),
        };
        for t in 1..=self.max_iterations() {
            self.session.step = t;
            let history = history_of(&plan);
            let prompt = self.baseline_prompt(&PLAN_EXECUTE, &render_subtasks(&history));
            let pairs = match self.ask_steps(Purpose::Planning, prompt) {
                Ok(p) => p,
                Err(e) => return Ending::fatal(t, history, &e),
            };
            let room = self.planner.max_plan_len.saturating_sub(plan.executed_len());
            let current = plan.splice(baseline_steps(pairs, room), t);
            self.revisions.push(current.clone());
            match self.execute_step(&current, true) {
                Ok(Some(next)) => plan = next,
                _ => return Ending::new(TerminationReason::Finish, t, history_of(&current)),
            }
        }
        Ending::new(TerminationReason::MaxIterations, self.max_iterations(), history_of(&plan))
    }

    fn react(&mut self) -> Ending {
        let mut history = History::default();
        for t in 1..=self.max_iterations() {
            self.session.step = t;
            let prompt = self.baseline_prompt(&REACT, &render_raw_actions(&history));
            let response = match self.session.prompt(Purpose::React, prompt) {
                Ok(r) => r,
                Err(e) => return Ending::fatal(t, history, &PlannerError::Backend(e)),
            };
            let thought = labelled_line(&response, "Thought").unwrap_or_default();
            let action_text = labelled_line(&response, "Action").unwrap_or_else(|| response.trim().to_string());
            if let Some(answer) = finish_argument(&action_text) {
                let mut end = Ending::new(TerminationReason::Finish, t, history);
                end.fallback = answer;
                return end;
            }
            let (objective, observation) = match parse_tool_calls(&action_text).into_iter().next() {
                Some(call) => {
                    let result = run_call(
                        self.ctx.env,
                        &self.task.tables,
                        &call,
                        t,
                        &mut self.session.tool_calls,
                    );
                    (call.react_form(), render_tool_result(&call, &result))
                }
                None => (
                    action_text.clone(),
                    "Invalid action. Use tool_name[field=<field>, value=<value>] or Finish[<answer>].".to_string(),
                ),
            };
            history.push(HistoryEntry {
                thought,
                action: SkillAction::new(SkillKind::Searching, objective),
                observation: truncate_observation(&observation, self.budget()),
            });
        }
        Ending::new(TerminationReason::MaxIterations, self.max_iterations(), history)
    }

    fn codeact(&mut self) -> Ending {
        let mut history = History::default();
        for t in 1..=self.max_iterations() {
            self.session.step = t;
            let prompt = self.baseline_prompt(&CODEACT, &render_raw_actions(&history));
            let response = match self.session.prompt(Purpose::Codeact, prompt) {
                Ok(r) => r,
                Err(e) => return Ending::fatal(t, history, &PlannerError::Backend(e)),
            };
            let thought = labelled_line(&response, "Thought").unwrap_or_default();
            let (script, observation) = match first_fenced_block(&response) {
                Some(script) => {
                    let script = script.to_string();
                    let outcome = {
                        let snapshot = history.clone();
                        let mut ctx = self.skill_ctx(&snapshot);
                        run_script(script.clone(), &mut ctx)
                    };
                    (script, outcome.observation)
                }
                None => {
                    let action = labelled_line(&response, "Action").unwrap_or_default();
                    if let Some(answer) = finish_argument(&action) {
                        let mut end = Ending::new(TerminationReason::Finish, t, history);
                        end.fallback = answer;
                        return end;
                    }
                    (
                        String::new(),
                        "No code block or Finish action was found in the response.".to_string(),
                    )
                }
            };
            history.push(HistoryEntry {
                thought,
                action: SkillAction::new(SkillKind::Coding, script),
                observation: truncate_observation(&observation, self.budget()),
            });
        }
        Ending::new(TerminationReason::MaxIterations, self.max_iterations(), history)
    }

    fn summarize(&mut self, history: &History) -> Result<String, crate::backend::BackendError> {
        let prompt = SUMMARIZE
            .render(&[
                ("question", &self.task.query),
                ("history", &budget_history(history, self.skills.writing_budget)),
            ])
            .expect("summarize template slots are fixed");
        self.session
            .prompt(Purpose::Summarize, prompt)
            .map(|a| a.trim().to_string())
    }

    fn finish(mut self, method: String, ending: Ending) -> Trajectory {
        let (final_answer, degraded) = match self.summarize(&ending.history) {
            Ok(answer) => (Some(answer), false),
            Err(_) => (
                ending
                    .fallback
                    .clone()
                    .or_else(|| ending.history.last_observation().map(str::to_string)),
                true,
            ),
        };
        Trajectory {
            task_id: self.task.id.clone(),
            method,
            question: self.task.query.clone(),
            revisions: self.revisions,
            history: ending.history,
            exchanges: self.session.exchanges,
            tool_calls: self.session.tool_calls,
            sandbox_runs: self.session.sandbox_runs,
            final_answer,
            degraded,
            step_count: ending.step_count,
            termination_reason: ending.reason,
            failure: ending.failure,
        }
    }
}

/// Text after `label:` on the first line that starts with it, ignoring a
/// trailing step number (`Action 3:`).
fn labelled_line(text: &str, label: &str) -> Option<String> {
    text.lines().find_map(|line| {
        let rest = line.trim().strip_prefix(label)?;
        let rest = rest.trim_start_matches(|c: char| c.is_ascii_digit() || c == ' ');
        rest.strip_prefix(':').map(|r| r.trim().to_string())
    })
}

/// `Some(answer)` for a Finish action; the inner answer is `None` when the
/// brackets are absent.
fn finish_argument(action: &str) -> Option<Option<String>> {
    let rest = action.trim().strip_prefix("Finish")?;
    let rest = rest.trim();
    if rest.is_empty() {
        return Some(None);
    }
    let inner = rest.strip_prefix('[')?.strip_suffix(']')?;
    Some(Some(inner.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_lines() {
        let r = "Thought 2: look it up\nAction 2: get_case[field=case_no, value=C-1]";
        assert_eq!(labelled_line(r, "Thought").unwrap(), "look it up");
        assert_eq!(labelled_line(r, "Action").unwrap(), "get_case[field=case_no, value=C-1]");
        assert_eq!(finish_argument("Finish[Oslo]"), Some(Some("Oslo".into())));
        assert_eq!(finish_argument("Finish"), Some(None));
        assert_eq!(finish_argument("get_case[x]"), None);
    }
}
