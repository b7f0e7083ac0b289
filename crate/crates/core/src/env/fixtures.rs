//! Fixture directory layout: `tables/<Name>.json` (one table document per
//! file) and `tasks/<id>.json` (one task document per file).

use std::fs;
use std::path::{Path, PathBuf};

use super::{EnvError, Environment, GeneratedTask, Table, Task};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EnvError + '_ {
    move |source| EnvError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn decode_err(path: &Path) -> impl FnOnce(serde_json::Error) -> EnvError + '_ {
    move |source| EnvError::Decode {
        path: path.display().to_string(),
        source,
    }
}

fn sorted_json_files(dir: &Path) -> Result<Vec<PathBuf>, EnvError> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn load_tables(dir: &Path) -> Result<Environment, EnvError> {
    let mut env = Environment::new();
    for path in sorted_json_files(&dir.join("tables"))? {
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let table: Table = serde_json::from_str(&text).map_err(decode_err(&path))?;
        env.add_table(table)?;
    }
    Ok(env)
}

pub fn load_tasks(dir: &Path) -> Result<Vec<Task>, EnvError> {
    let mut tasks = Vec::new();
    for path in sorted_json_files(&dir.join("tasks"))? {
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        tasks.push(serde_json::from_str::<Task>(&text).map_err(decode_err(&path))?);
    }
    tasks.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(tasks)
}

pub fn load(dir: &Path) -> Result<(Environment, Vec<Task>), EnvError> {
    Ok((load_tables(dir)?, load_tasks(dir)?))
}

/// Writes generated tasks into `dir`, merging their rows into any tables
/// already present. Re-writing an existing task id is a no-op for its rows.
pub fn write(dir: &Path, generated: &[GeneratedTask]) -> Result<Vec<PathBuf>, EnvError> {
    let tasks_dir = dir.join("tasks");
    let tables_dir = dir.join("tables");
    fs::create_dir_all(&tasks_dir).map_err(io_err(&tasks_dir))?;
    fs::create_dir_all(&tables_dir).map_err(io_err(&tables_dir))?;

    let mut env = load_tables(dir)?;
    let existing: Vec<String> = load_tasks(dir)?.into_iter().map(|t| t.id).collect();
    let mut written = Vec::new();
    for g in generated {
        if existing.contains(&g.task.id) {
            continue;
        }
        for t in &g.tables {
            env.add_table(t.clone())?;
        }
        let path = tasks_dir.join(format!("{}.json", g.task.id));
        let text = serde_json::to_string_pretty(&g.task).expect("tasks serialize");
        fs::write(&path, text + "\n").map_err(io_err(&path))?;
        written.push(path);
    }
    for table in env.tables() {
        let path = tables_dir.join(format!("{}.json", table.name));
        let text = serde_json::to_string_pretty(table).expect("tables serialize");
        fs::write(&path, text + "\n").map_err(io_err(&path))?;
    }
    Ok(written)
}
