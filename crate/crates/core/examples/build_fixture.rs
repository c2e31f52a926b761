//! Regenerates the replay fixtures under `tests/fixtures/`.
//!
//!     cargo run -p issuelens --example build_fixture
//!
//! `tf_function/` replays a search for `tf.function` over six issues:
//! three with matching discussions, one without comments, one that only
//! mentions "tf function", and one whose comments return 404.
//! `rate_limit_probe/` holds a single `/rate_limit` answer.

use std::path::Path;

use chrono::{DateTime, Utc};
use issuelens::github_client::{
    Fixture, HttpResponse, IssueRef, RawComment, RequestKey, SortKey, SortOrder,
};

const QUERY: &str = "tf.function";
const PER_PAGE: usize = 100;

fn at(s: &str) -> DateTime<Utc> {
    s.parse().expect("valid timestamp")
}

fn issue(
    id: u64,
    repo: &str,
    number: u64,
    title: &str,
    body: &str,
    comments: u64,
    created: &str,
) -> IssueRef {
    IssueRef {
        id,
        number,
        repo_full_name: repo.into(),
        title: title.into(),
        body: body.into(),
        html_url: format!("https://github.com/{repo}/issues/{number}"),
        api_url: format!("https://api.github.com/repos/{repo}/issues/{number}"),
        comments_url: format!("https://api.github.com/repos/{repo}/issues/{number}/comments"),
        comment_count: comments,
        created_at: at(created),
        updated_at: at(created),
    }
}

fn comment(issue: &IssueRef, id: u64, login: &str, created: &str, body: &str) -> RawComment {
    RawComment {
        issue_id: issue.id,
        comment_id: id,
        author_login: login.into(),
        body: body.into(),
        created_at: at(created),
    }
}

fn tf_function(dir: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let summary = issue(
        415902593,
        "tensorflow/tensorflow",
        26193,
        "tf.summary.trace_on does not capture graphs of tf.function calls",
        "Tracing a `tf.function` with `tf.summary.trace_on` writes an empty graph to TensorBoard.",
        3,
        "2019-02-28T01:12:40Z",
    );
    let subclassed = issue(
        417390174,
        "tensorflow/tensorflow",
        26312,
        "tf.function fails on subclassed model with complex inputs",
        "Calling a subclassed Keras model inside tf.function raises for complex64 tensors.",
        0,
        "2019-03-05T16:20:11Z",
    );
    let decorator = issue(
        740456602,
        "tensorflow/tensorflow",
        44795,
        "Slow first step when using tf function decorator",
        "The first training step takes minutes once the tf function decorator is applied.",
        2,
        "2020-11-11T04:03:52Z",
    );
    let coreml = issue(
        767685452,
        "apple/coremltools",
        1052,
        "Converting a model that uses tf.function with dynamic shapes",
        "Conversion fails for a model exported with tf.function and dynamic batch size.",
        2,
        "2020-12-15T09:44:02Z",
    );
    let tracing = issue(
        947976601,
        "tensorflow/tensorflow",
        50952,
        "Assertion inside tf.function is raised on the wrong branch",
        "A tf.debugging assertion fires even though the branch never runs.",
        2,
        "2021-07-19T22:31:07Z",
    );
    let minerl = issue(
        1004824336,
        "minerllabs/minerl",
        512,
        "Pretrained agent never crafts a stone pickaxe",
        "The cobblestone agent from the baseline gets stuck after crafting a table.",
        5,
        "2021-09-22T13:05:59Z",
    );

    let mut f = Fixture::new();
    f.add_search(
        QUERY,
        SortKey::BestMatch,
        SortOrder::Desc,
        PER_PAGE,
        &[
            summary.clone(),
            minerl.clone(),
            decorator.clone(),
            subclassed.clone(),
            tracing.clone(),
            coreml.clone(),
        ],
    );

    f.add_comments(
        &summary,
        PER_PAGE,
        &[
            comment(
                &summary,
                468420311,
                "mdanatg",
                "2019-03-01T10:02:13Z",
                "However this gets us a step closer, running the original code the actual error message from tensorboard does not propagate to the UI: `graph is empty`.\n\
                 I think the simplest fix around this would be to call trace_on and trace_export separately around the graph call, so something like:\n\
                 ```python\ntf.summary.trace_on(graph=True)\nresult = f(x)\ntf.summary.trace_export(name=\"f\", step=0)\n```",
            ),
            comment(
                &summary,
                468522409,
                "reporter-one",
                "2019-03-01T17:40:51Z",
                "@mdanatg thanks, that works with tf.function in 2.0.0-alpha0.\n> call trace_on and trace_export separately\nSee https://www.tensorflow.org/tensorboard/graphs for the docs.",
            ),
            comment(
                &summary,
                470099115,
                "tb-maintainer",
                "2019-03-06T08:15:37Z",
                "We will add a note to the docs; closing once the fix lands in the nightly build.",
            ),
        ],
    );
    f.add_comments(
        &decorator,
        PER_PAGE,
        &[
            comment(
                &decorator,
                726381001,
                "perf-user",
                "2020-11-12T02:11:45Z",
                "Removing the tf function decorator is a viable workaround, but is it best practice? A related issue: https://github.com/tensorflow/tensorflow/issues/27120",
            ),
            comment(
                &decorator,
                726399870,
                "triager",
                "2020-11-12T03:00:00Z",
                "Could you share a minimal example so we can reproduce the slowdown?",
            ),
        ],
    );
    f.add_comments_status(&coreml, PER_PAGE, 404);
    f.add_comments(
        &tracing,
        PER_PAGE,
        &[
            comment(
                &tracing,
                883311702,
                "graph-mode",
                "2021-07-20T06:52:19Z",
                "The situation is actually much worse, I realised `tf.debugging.assert_equal` and `tf.print` are both affected.\n\
                 The following test should pass:\n~~~\n@tf.function\ndef f(x):\n    if x > 0:\n        tf.debugging.assert_positive(x)\n~~~",
            ),
            comment(
                &tracing,
                883458113,
                "graph-mode",
                "2021-07-20T11:03:27Z",
                "The `InvalidArgumentError` is raised even though the value does not execute the error branch, perhaps due to tracing covering every branch. This suggests autograph converts both sides, \"always\" in graph mode.",
            ),
        ],
    );
    f.add_comments(
        &minerl,
        PER_PAGE,
        &[
            comment(
                &minerl,
                926011421,
                "maintainer-a",
                "2021-09-23T08:30:00Z",
                "@minerl-user could you specify the tensorflow version? Do you use docker?",
            ),
            comment(
                &minerl,
                926154873,
                "minerl-user",
                "2021-09-23T12:47:15Z",
                "tf version `2.6.0`, unfortunately I don't use docker.\nThx, I guess something could be wrong with pretraining cobblestone, because I tested running the pre-trained cobblestone agent and it works.",
            ),
            comment(
                &minerl,
                926410057,
                "minerl-user",
                "2021-09-23T18:02:44Z",
                "Hi, I've checked the sliced_trajectory data part is correct. May I ask which chain is used in the pretraining part, the forger one most likely? `chain_id = 3`",
            ),
            comment(
                &minerl,
                927003311,
                "maintainer-b",
                "2021-09-24T09:12:09Z",
                "@minerl-user I can reproduce the reported behavior with the docker version, also I tried to reproduce without docker and got an error from tf.function retracing.",
            ),
            comment(
                &minerl,
                927215566,
                "minerl-user",
                "2021-09-24T15:31:50Z",
                "Yes, `trajectory[4]` is where I see the problem with the chain. For example the agent should place an additional crafting table, creating a stone pickaxe, and look at the first tree.",
            ),
        ],
    );
    f.save(dir)?;
    Ok(())
}

fn rate_limit_probe(dir: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let body = r#"{
  "resources": {
    "core": { "limit": 5000, "used": 12, "remaining": 4988, "reset": 1609462800 },
    "search": { "limit": 30, "used": 2, "remaining": 28, "reset": 1609459260 },
    "graphql": { "limit": 5000, "used": 0, "remaining": 5000, "reset": 1609462800 }
  },
  "rate": { "limit": 5000, "used": 12, "remaining": 4988, "reset": 1609462800 }
}
"#;
    let response = HttpResponse::new(200, body)
        .with_header("Content-Type", "application/json; charset=utf-8")
        .with_header("X-RateLimit-Limit", "5000")
        .with_header("X-RateLimit-Remaining", "4988")
        .with_header("X-RateLimit-Reset", "1609462800")
        .with_header("X-RateLimit-Resource", "core");
    let mut f = Fixture::new();
    f.insert(
        "rate_limit",
        RequestKey::from_url(&"https://api.github.com/rate_limit".parse()?),
        response,
    );
    f.save(dir)?;
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    tf_function(&root.join("tf_function"))?;
    rate_limit_probe(&root.join("rate_limit_probe"))?;
    println!("fixtures written to {}", root.display());
    Ok(())
}
