//! Child-process classifier speaking a line protocol over stdin/stdout:
//! `PREDICT <n>` followed by `n` PNG paths, answered by `n` probabilities.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use tempfile::TempDir;

use super::{check_probabilities, Classifier, ClassifierError};
use crate::raster::{save_patch_png, Patch};

struct Session {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    scratch: TempDir,
    batch: u64,
}

pub struct ExternalClassifier {
    session: Mutex<Session>,
    patch_size: usize,
    command: String,
}

impl ExternalClassifier {
    /// Starts `command[0]` with the remaining arguments.
    pub fn spawn(
        command: &[String],
        workdir: Option<PathBuf>,
        patch_size: usize,
    ) -> Result<Self, ClassifierError> {
        let (prog, args) = command
            .split_first()
            .ok_or_else(|| ClassifierError::External("empty command line".into()))?;
        let mut cmd = Command::new(prog);
        cmd.args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        if let Some(dir) = workdir {
            cmd.current_dir(dir);
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| ClassifierError::External(format!("cannot start {prog:?}: {e}")))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let scratch = tempfile::tempdir()
            .map_err(|e| ClassifierError::External(format!("scratch dir: {e}")))?;
        Ok(Self {
            session: Mutex::new(Session {
                child,
                stdin,
                stdout,
                scratch,
                batch: 0,
            }),
            patch_size,
            command: command.join(" "),
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }
}

impl Session {
    fn round_trip(&mut self, patches: &[Patch]) -> Result<Vec<f64>, ClassifierError> {
        self.batch += 1;
        let mut paths = Vec::with_capacity(patches.len());
        for (i, p) in patches.iter().enumerate() {
            let path = self
                .scratch
                .path()
                .join(format!("b{:06}_{:06}.png", self.batch, i));
            save_patch_png(p, &path)?;
            paths.push(path);
        }
        let io_err = |e: std::io::Error| ClassifierError::External(format!("pipe error: {e}"));
        writeln!(self.stdin, "PREDICT {}", patches.len()).map_err(io_err)?;
        for p in &paths {
            writeln!(self.stdin, "{}", p.display()).map_err(io_err)?;
        }
        self.stdin.flush().map_err(io_err)?;

        let mut out = Vec::with_capacity(patches.len());
        let mut line = String::new();
        for i in 0..patches.len() {
            line.clear();
            let n = self.stdout.read_line(&mut line).map_err(io_err)?;
            if n == 0 {
                return Err(ClassifierError::Protocol(format!(
                    "process closed its output after {i} of {} answers",
                    patches.len()
                )));
            }
            let v: f64 = line.trim().parse().map_err(|_| {
                ClassifierError::Protocol(format!("answer {i} is not a number: {:?}", line.trim()))
            })?;
            out.push(v);
        }
        for p in &paths {
            let _ = std::fs::remove_file(p);
        }
        check_probabilities(&out)?;
        Ok(out)
    }
}

impl Classifier for ExternalClassifier {
    fn patch_size(&self) -> usize {
        self.patch_size
    }

    fn predict_proba(&self, patches: &[Patch]) -> Result<Vec<f64>, ClassifierError> {
        if patches.is_empty() {
            return Ok(Vec::new());
        }
        let mut s = self
            .session
            .lock()
            .map_err(|_| ClassifierError::External("session poisoned".into()))?;
        s.round_trip(patches)
    }

    fn concurrent(&self) -> bool {
        false
    }
}

impl Drop for ExternalClassifier {
    fn drop(&mut self) {
        if let Ok(s) = self.session.get_mut() {
            let _ = s.child.kill();
            let _ = s.child.wait();
        }
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;

    fn stub(body: &str) -> (TempDir, Vec<String>) {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("stub.sh");
        std::fs::write(&script, body).unwrap();
        (dir, vec!["sh".into(), script.display().to_string()])
    }

    const ECHO_09: &str = r#"
while read cmd n; do
  i=0
  while [ $i -lt $n ]; do read path; [ -f "$path" ] || exit 3; i=$((i+1)); done
  i=0
  while [ $i -lt $n ]; do echo 0.9; i=$((i+1)); done
done
"#;

    #[test]
    fn constant_stub_answers() {
        let (_d, cmd) = stub(ECHO_09);
        let c = ExternalClassifier::spawn(&cmd, None, 80).unwrap();
        let patches = vec![Patch::filled(80, 80, [0, 0, 0]); 3];
        assert_eq!(c.predict_proba(&patches).unwrap(), vec![0.9; 3]);
        // the session persists across batches
        assert_eq!(c.predict_proba(&patches[..1]).unwrap(), vec![0.9]);
        assert!(!c.concurrent());
    }

    #[test]
    fn protocol_violations() {
        let (_d, cmd) = stub("read cmd n; read p; echo banana\n");
        let c = ExternalClassifier::spawn(&cmd, None, 80).unwrap();
        assert!(matches!(
            c.predict_proba(&[Patch::filled(4, 4, [1, 1, 1])]),
            Err(ClassifierError::Protocol(_))
        ));

        let (_d, cmd) = stub("read cmd n; read p; echo 1.5\n");
        let c = ExternalClassifier::spawn(&cmd, None, 80).unwrap();
        assert!(matches!(
            c.predict_proba(&[Patch::filled(4, 4, [1, 1, 1])]),
            Err(ClassifierError::BadProbability { .. })
        ));

        let (_d, cmd) = stub("exit 0\n");
        let c = ExternalClassifier::spawn(&cmd, None, 80).unwrap();
        assert!(c.predict_proba(&[Patch::filled(4, 4, [1, 1, 1])]).is_err());

        assert!(ExternalClassifier::spawn(&["/nonexistent/binary".into()], None, 80).is_err());
    }
}
