use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::types::{Action, ScreenState, SwipeDirection, Widget, WidgetKind, SCREEN_DIMS};
use crate::geometry::Rect;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AppError {
    #[error("app {app}: {msg}")]
    Invalid { app: String, msg: String },
    #[error("duplicate app id {0}")]
    DuplicateApp(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarCondition {
    pub var: String,
    pub equals: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WidgetSpec {
    pub widget_id: String,
    pub kind: WidgetKind,
    pub bbox: Rect,
    /// Display text; `{name}` is replaced by the value of variable `name`.
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disabled_when: Option<VarCondition>,
}

/// What fires a transition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Trigger {
    Tap(String),
    Swipe(SwipeDirection),
    Back,
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trigger::Tap(w) => write!(f, "tap:{w}"),
            Trigger::Swipe(d) => write!(f, "swipe:{}", d.as_str()),
            Trigger::Back => f.write_str("back"),
        }
    }
}

impl core::str::FromStr for Trigger {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "back" {
            return Ok(Trigger::Back);
        }
        if let Some(w) = s.strip_prefix("tap:") {
            return Ok(Trigger::Tap(w.into()));
        }
        if let Some(d) = s.strip_prefix("swipe:") {
            return SwipeDirection::parse(d).map(Trigger::Swipe).ok_or_else(|| format!("bad swipe direction {d:?}"));
        }
        Err(format!("unknown trigger {s:?}"))
    }
}

impl Serialize for Trigger {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Trigger {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Effect {
    Set { var: String, value: String },
    Toggle { var: String },
    Clear { var: String },
    Copy { from: String, to: String },
}

impl Effect {
    fn apply(&self, vars: &mut BTreeMap<String, String>) {
        match self {
            Effect::Set { var, value } => {
                vars.insert(var.clone(), value.clone());
            }
            Effect::Toggle { var } => toggle(vars, var),
            Effect::Clear { var } => {
                vars.remove(var);
            }
            Effect::Copy { from, to } => match vars.get(from).cloned() {
                Some(v) => {
                    vars.insert(to.clone(), v);
                }
                None => {
                    vars.remove(to);
                }
            },
        }
    }
}

fn toggle(vars: &mut BTreeMap<String, String>, var: &str) {
    let next = if vars.get(var).map(String::as_str) == Some("on") { "off" } else { "on" };
    vars.insert(var.into(), next.into());
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub on: Trigger,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub effects: Vec<Effect>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreenSpec {
    pub screen_id: String,
    pub widgets: Vec<WidgetSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transitions: Vec<Transition>,
}

fn default_dims() -> (u32, u32) {
    SCREEN_DIMS
}

/// One app: a finite screen graph with variable effects.
///
/// Toggles flip the variable named by their `widget_id` when tapped; text
/// fields store typed text under their `widget_id`. Everything else happens
/// through declared transitions. Triggers without a transition are valid
/// self-loops.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppGraph {
    pub app_id: String,
    pub start_screen: String,
    #[serde(default = "default_dims")]
    pub screen_dims: (u32, u32),
    /// Fixed initial variable values.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub vars: BTreeMap<String, String>,
    /// Variables whose initial value is drawn from the list by the task's
    /// `init_seed`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub seeded_vars: BTreeMap<String, Vec<String>>,
    pub screens: Vec<ScreenSpec>,
}

/// Outcome of applying an action to an app state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Applied {
    Moved { screen: String, vars: BTreeMap<String, String> },
    Invalid(&'static str),
}

impl AppGraph {
    pub fn screen(&self, id: &str) -> Option<&ScreenSpec> {
        self.screens.iter().find(|s| s.screen_id == id)
    }

    pub fn validate(&self) -> Result<(), AppError> {
        let err = |msg: String| Err(AppError::Invalid { app: self.app_id.clone(), msg });
        if self.app_id.is_empty() {
            return err("empty app_id".into());
        }
        let mut ids = BTreeSet::new();
        for s in &self.screens {
            if s.screen_id.is_empty() || !ids.insert(s.screen_id.as_str()) {
                return err(format!("empty or duplicate screen id {:?}", s.screen_id));
            }
        }
        if !ids.contains(self.start_screen.as_str()) {
            return err(format!("start screen {:?} missing", self.start_screen));
        }
        for (var, values) in &self.seeded_vars {
            if values.is_empty() {
                return err(format!("seeded var {var} has no values"));
            }
        }
        let (w, h) = self.screen_dims;
        for s in &self.screens {
            let mut wids = BTreeSet::new();
            for wd in &s.widgets {
                if wd.widget_id.is_empty() || !wids.insert(wd.widget_id.as_str()) {
                    return err(format!("screen {}: empty or duplicate widget id {:?}", s.screen_id, wd.widget_id));
                }
                if !wd.bbox.within(w, h) {
                    return err(format!("screen {}: widget {} bbox out of bounds", s.screen_id, wd.widget_id));
                }
            }
            for t in &s.transitions {
                if let Trigger::Tap(wid) = &t.on {
                    if !wids.contains(wid.as_str()) {
                        return err(format!("screen {}: transition on unknown widget {wid}", s.screen_id));
                    }
                }
                if let Some(to) = &t.to {
                    if !ids.contains(to.as_str()) {
                        return err(format!("screen {}: transition to unknown screen {to}", s.screen_id));
                    }
                }
            }
        }
        Ok(())
    }

    /// Initial variables for a given seed: fixed vars, then one draw per
    /// seeded var in key order.
    pub fn initial_vars(&self, init_seed: u64) -> BTreeMap<String, String> {
        let mut vars = self.vars.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        for (name, values) in &self.seeded_vars {
            let idx = (rng.next_u64() % values.len() as u64) as usize;
            vars.insert(name.clone(), values[idx].clone());
        }
        vars
    }

    pub fn render(&self, screen_id: &str, vars: &BTreeMap<String, String>) -> ScreenState {
        let spec = self.screen(screen_id).expect("screen ids are validated");
        let mut widgets: Vec<Widget> = spec
            .widgets
            .iter()
            .map(|w| Widget {
                widget_id: w.widget_id.clone(),
                kind: w.kind,
                bbox: w.bbox,
                text: fill_template(&w.text, vars),
                enabled: !w
                    .disabled_when
                    .as_ref()
                    .is_some_and(|c| vars.get(&c.var) == Some(&c.equals)),
            })
            .collect();
        widgets.sort_by(|a, b| a.widget_id.cmp(&b.widget_id));
        ScreenState {
            app_id: self.app_id.clone(),
            screen_id: screen_id.to_string(),
            widgets,
            var_bindings: vars.clone(),
            screen_dims: self.screen_dims,
        }
    }

    fn widget_enabled(&self, w: &WidgetSpec, vars: &BTreeMap<String, String>) -> bool {
        !w.disabled_when.as_ref().is_some_and(|c| vars.get(&c.var) == Some(&c.equals))
    }

    /// Successor of a rendered state under `action`, or `None` when the
    /// action is invalid there.
    pub fn preview(&self, state: &ScreenState, action: &Action) -> Option<ScreenState> {
        if state.app_id != self.app_id || self.screen(&state.screen_id).is_none() {
            return None;
        }
        match self.apply(&state.screen_id, &state.var_bindings, action) {
            Applied::Moved { screen, vars } => Some(self.render(&screen, &vars)),
            Applied::Invalid(_) => None,
        }
    }

    /// Pure transition function. `Done` is handled by the device and is a
    /// self-loop here.
    pub(crate) fn apply(&self, screen_id: &str, vars: &BTreeMap<String, String>, action: &Action) -> Applied {
        let spec = self.screen(screen_id).expect("screen ids are validated");
        let (w, h) = self.screen_dims;
        let in_bounds = |p: &crate::geometry::Point| p.x >= 0 && p.y >= 0 && p.x as u32 <= w && p.y as u32 <= h;
        let mut next = vars.clone();
        let trigger = match action {
            Action::Tap { point } => {
                if !in_bounds(point) {
                    return Applied::Invalid("tap out of bounds");
                }
                let Some(target) = spec
                    .widgets
                    .iter()
                    .find(|wd| wd.bbox.contains(*point) && self.widget_enabled(wd, vars))
                else {
                    return Applied::Invalid("no enabled widget at point");
                };
                if target.kind == WidgetKind::Toggle {
                    toggle(&mut next, &target.widget_id);
                }
                Trigger::Tap(target.widget_id.clone())
            }
            Action::Swipe { from, to } => {
                if !in_bounds(from) || !in_bounds(to) {
                    return Applied::Invalid("swipe out of bounds");
                }
                match SwipeDirection::of(*from, *to) {
                    Some(d) => Trigger::Swipe(d),
                    None => return Applied::Invalid("zero-length swipe"),
                }
            }
            Action::TypeText { widget_id, text } => {
                let field = spec.widgets.iter().find(|wd| &wd.widget_id == widget_id);
                match field {
                    Some(f) if f.kind == WidgetKind::TextField && self.widget_enabled(f, vars) => {
                        next.insert(widget_id.clone(), text.clone());
                        return Applied::Moved { screen: screen_id.into(), vars: next };
                    }
                    _ => return Applied::Invalid("type_text target is not an enabled text field"),
                }
            }
            Action::Back => Trigger::Back,
            Action::Done { .. } => return Applied::Moved { screen: screen_id.into(), vars: next },
        };
        let mut screen = screen_id.to_string();
        if let Some(t) = spec.transitions.iter().find(|t| t.on == trigger) {
            for e in &t.effects {
                e.apply(&mut next);
            }
            if let Some(to) = &t.to {
                screen = to.clone();
            }
        }
        Applied::Moved { screen, vars: next }
    }
}

fn fill_template(template: &str, vars: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                if let Some(v) = vars.get(&after[..close]) {
                    out.push_str(v);
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// All apps a device can run, keyed by `app_id`.
#[derive(Debug, Clone, Default)]
pub struct AppRegistry {
    apps: BTreeMap<String, Arc<AppGraph>>,
}

impl AppRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_apps(apps: impl IntoIterator<Item = AppGraph>) -> Result<Self, AppError> {
        let mut reg = Self::new();
        for app in apps {
            reg.register(app)?;
        }
        Ok(reg)
    }

    pub fn register(&mut self, app: AppGraph) -> Result<(), AppError> {
        app.validate()?;
        if self.apps.contains_key(&app.app_id) {
            return Err(AppError::DuplicateApp(app.app_id));
        }
        self.apps.insert(app.app_id.clone(), Arc::new(app));
        Ok(())
    }

    pub fn get(&self, app_id: &str) -> Option<&Arc<AppGraph>> {
        self.apps.get(app_id)
    }

    pub fn apps(&self) -> impl Iterator<Item = &AppGraph> {
        self.apps.values().map(|a| a.as_ref())
    }

    /// `app_id/screen_id` for every screen, sorted.
    pub fn screen_keys(&self) -> Vec<String> {
        let mut keys: Vec<String> = self
            .apps
            .values()
            .flat_map(|a| a.screens.iter().map(move |s| format!("{}/{}", a.app_id, s.screen_id)))
            .collect();
        keys.sort();
        keys
    }
}
