//! Serves the labeling UI over a synthetic dataset.
//!
//! `cargo run --example annotation_server -- [addr]` keeps serving until
//! Ctrl-C. With `--demo` it labels one image over HTTP and exits.

use ionmorph::annotate::{AnnotateConfig, AnnotationServer};
use ionmorph::fixtures::{write_fixture, FixtureConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let demo = args.iter().any(|a| a == "--demo");
    let addr = args.iter().find(|a| !a.starts_with("--")).cloned().unwrap_or_else(|| "127.0.0.1:0".into());

    let tmp = tempfile::tempdir()?;
    let info = write_fixture(tmp.path(), &FixtureConfig::default())?;
    let manifest = tmp.path().join("labels.jsonl");
    let server = AnnotationServer::bind(&AnnotateConfig::new(vec![info.dataset], &manifest), &addr)?;
    let base = format!("http://{}", server.local_addr());
    println!("serving {} tasks at {base}/", server.session().task_count());
    if !demo {
        server.run()?;
        return Ok(());
    }

    std::thread::spawn(move || server.run_until(std::future::pending()));
    let agent = ureq::agent();
    let task: serde_json::Value = serde_json::from_str(&agent.get(&format!("{base}/api/task/next")).call()?.body_mut().read_to_string()?)?;
    println!("next task {} (m/z {})", task["image_id"], task["mz"]);
    let body = serde_json::json!({"image_id": task["image_id"], "class": "structured"}).to_string();
    let out = agent
        .post(&format!("{base}/api/labels"))
        .header("content-type", "application/json")
        .send(body)?
        .body_mut()
        .read_to_string()?;
    println!("label -> {out}");
    let progress = agent.get(&format!("{base}/api/progress")).call()?.body_mut().read_to_string()?;
    println!("progress {progress}");
    print!("manifest:\n{}", std::fs::read_to_string(&manifest)?);
    Ok(())
}
