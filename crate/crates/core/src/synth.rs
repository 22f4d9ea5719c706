//! Synthetic fixture apps: the test corpus generator and builders for tests.

use std::collections::BTreeMap;

use crate::fixture::{FixtureApp, PageFixture, Transition, TransitionKind};
use crate::geometry::Rect;
use crate::observation::NodeRecord;
use crate::rng::SeededRng;

pub fn text_node(id: &str, tag: &str, text: &str, rect: Rect) -> NodeRecord {
    NodeRecord {
        node_id: id.into(),
        parent_id: None,
        tag: tag.into(),
        text: text.into(),
        rect,
        z_index: 0,
        clickable: false,
        inputable: false,
        opaque: false,
    }
}

pub fn link_node(id: &str, text: &str, rect: Rect) -> NodeRecord {
    NodeRecord {
        clickable: true,
        ..text_node(id, "a", text, rect)
    }
}

pub fn input_node(id: &str, placeholder: &str, rect: Rect) -> NodeRecord {
    NodeRecord {
        inputable: true,
        ..text_node(id, "input", placeholder, rect)
    }
}

fn click(node_id: &str, target: &str) -> Transition {
    Transition {
        node_id: node_id.into(),
        action_kind: TransitionKind::Click,
        target_page_id: target.into(),
    }
}

fn submit(node_id: &str, target: &str) -> Transition {
    Transition {
        action_kind: TransitionKind::Input,
        ..click(node_id, target)
    }
}

fn page(page_id: &str, w: i64, h: i64, nodes: Vec<NodeRecord>, transitions: Vec<Transition>) -> PageFixture {
    PageFixture {
        page_id: page_id.into(),
        content_w: w,
        content_h: h,
        nodes,
        transitions,
    }
}

/// Pages `p0 → p1 → … → p{n-1}`, one link each; the last page is text only.
pub fn chain_app(app_id: &str, n: usize) -> FixtureApp {
    let mut pages = BTreeMap::new();
    for i in 0..n {
        let mut nodes = vec![text_node("title", "h1", &format!("Page {i}"), Rect::new(0, 0, 300, 40))];
        let mut transitions = vec![];
        if i + 1 < n {
            let id = format!("next{i}");
            nodes.push(link_node(&id, &format!("go to {id}"), Rect::new(10, 100, 120, 30)));
            transitions.push(click(&id, &format!("p{}", i + 1)));
        }
        let id = format!("p{i}");
        pages.insert(id.clone(), page(&id, 300, 300, nodes, transitions));
    }
    FixtureApp {
        app_id: app_id.into(),
        initial_page: "p0".into(),
        pages,
    }
}

const TOPICS: &[&str] = &[
    "garden", "travel", "recipes", "bikes", "music", "books", "photos", "weather", "running", "coffee", "science",
    "movies", "design", "health", "games", "history",
];

const WORDS: &[&str] = &[
    "the", "best", "guide", "to", "your", "new", "and", "how", "simple", "for", "every", "day", "with", "our", "latest",
    "from", "team", "local", "ideas", "tips",
];

fn sentence(rng: &mut SeededRng, words: usize) -> String {
    (0..words)
        .map(|_| WORDS[rng.below(WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

const WIDTH: i64 = 1280;
const NAV: &[(&str, &str)] = &[("nav-home", "home"), ("nav-list", "list"), ("nav-about", "about"), ("nav-search", "search")];

/// Header shared by every page: logo, nav links to the other sections and
/// a sign-in link.
fn header(site: &str, current: &str) -> (Vec<NodeRecord>, Vec<Transition>) {
    let mut nodes = vec![text_node("logo", "div", site, Rect::new(16, 12, 160, 36))];
    let mut transitions = vec![];
    for (i, (id, target)) in NAV.iter().enumerate() {
        let rect = Rect::new(400 + 140 * i as i64, 16, 120, 28);
        if current == *target {
            nodes.push(text_node(id, "span", target, rect));
        } else {
            nodes.push(link_node(id, target, rect));
            transitions.push(click(id, target));
        }
    }
    if current != "signin" {
        nodes.push(link_node("sign-in", "sign in", Rect::new(1120, 16, 120, 28)));
        transitions.push(click("sign-in", "signin"));
    }
    (nodes, transitions)
}

/// A small site: home (optionally under a cookie banner), a long list
/// page, article pages, an about page, search and sign-in forms, a blank
/// page behind a broken link, and a few dead links.
pub fn synth_site(app_id: &str, seed: u64) -> FixtureApp {
    let mut rng = SeededRng::new(seed);
    let topic = TOPICS[rng.below(TOPICS.len())];
    let site = format!("{app_id} {topic}");
    let articles = 3 + rng.below(4);
    let mut pages = BTreeMap::new();
    let mut add = |id: &str, h: i64, mut body: Vec<NodeRecord>, mut tr: Vec<Transition>| {
        let (mut nodes, mut nav) = header(&site, id.trim_end_matches("-popup"));
        nodes.append(&mut body);
        tr.append(&mut nav);
        pages.insert(id.to_string(), page(id, WIDTH, h, nodes, tr));
    };

    // home
    let mut body = vec![text_node("hero", "h1", &format!("welcome to {topic}"), Rect::new(16, 80, 800, 60))];
    let mut tr = vec![];
    let featured = 2 + rng.below(3);
    for i in 0..featured.min(articles) {
        let id = format!("feat-{i}");
        body.push(link_node(&id, &sentence(&mut rng, 4), Rect::new(16, 180 + 60 * i as i64, 500, 40)));
        tr.push(click(&id, &format!("article-{i}")));
    }
    body.push(input_node("home-q", "search", Rect::new(700, 180, 400, 40)));
    tr.push(submit("home-q", "results"));
    add("home", 900, body.clone(), tr.clone());

    // cookie banner over part of home; accepting leads to the plain page
    let popup = rng.below(2) == 0;
    if popup {
        let mut covered = body;
        covered.push(NodeRecord {
            z_index: 10,
            opaque: true,
            ..text_node("cookie", "div", "we use cookies", Rect::new(0, 150, WIDTH, 260))
        });
        covered.push(NodeRecord {
            z_index: 11,
            ..link_node("cookie-ok", "accept", Rect::new(40, 300, 160, 48))
        });
        tr.push(click("cookie-ok", "home"));
        add("home-popup", 900, covered, tr);
    }

    // long list
    let mut body = vec![text_node("list-title", "h1", &format!("all {topic}"), Rect::new(16, 80, 600, 50))];
    let mut tr = vec![];
    for i in 0..articles * 4 {
        let id = format!("item-{i}");
        body.push(link_node(&id, &sentence(&mut rng, 5), Rect::new(16, 160 + 120 * i as i64, 700, 40)));
        if i < articles {
            tr.push(click(&id, &format!("article-{i}")));
        }
    }
    let list_h = 160 + 120 * (articles * 4) as i64 + 200;
    add("list", list_h, body, tr);

    // articles
    for i in 0..articles {
        let mut body = vec![
            text_node("headline", "h1", &sentence(&mut rng, 6), Rect::new(16, 80, 900, 60)),
            text_node("para-0", "p", &sentence(&mut rng, 20), Rect::new(16, 160, 900, 120)),
            text_node("para-1", "p", &sentence(&mut rng, 20), Rect::new(16, 300, 900, 120)),
        ];
        let mut tr = vec![];
        if i + 1 < articles {
            body.push(link_node("next", "next article", Rect::new(16, 460, 200, 36)));
            tr.push(click("next", &format!("article-{}", i + 1)));
        }
        if i == 0 {
            body.push(link_node("broken", "old archive", Rect::new(260, 460, 200, 36)));
            tr.push(click("broken", "gone"));
        }
        if i % 2 == 1 {
            body.push(link_node("like", "like", Rect::new(16, 520, 80, 30)));
        }
        add(&format!("article-{i}"), 1000 + 400 * rng.below(4) as i64, body, tr);
    }

    // about
    add(
        "about",
        700,
        vec![
            text_node("about-title", "h1", &format!("about {site}"), Rect::new(16, 80, 600, 50)),
            text_node("about-body", "p", &sentence(&mut rng, 25), Rect::new(16, 160, 900, 200)),
        ],
        vec![],
    );

    // search form and results
    add(
        "search",
        700,
        vec![
            text_node("search-title", "h1", "search", Rect::new(16, 80, 300, 50)),
            input_node("q", "what are you looking for", Rect::new(16, 160, 600, 44)),
        ],
        vec![submit("q", "results")],
    );
    let mut body = vec![text_node("results-title", "h1", "results", Rect::new(16, 80, 300, 50))];
    let mut tr = vec![];
    for i in 0..articles.min(3) {
        let id = format!("result-{i}");
        body.push(link_node(&id, &sentence(&mut rng, 5), Rect::new(16, 160 + 70 * i as i64, 700, 40)));
        tr.push(click(&id, &format!("article-{i}")));
    }
    add("results", 800, body, tr);

    add(
        "signin",
        700,
        vec![
            text_node("signin-title", "h1", "sign in", Rect::new(16, 80, 300, 50)),
            input_node("email", "email", Rect::new(16, 160, 400, 40)),
            link_node("forgot", "forgot password", Rect::new(16, 230, 200, 30)),
        ],
        vec![],
    );

    // a page with nothing on it
    pages.insert("gone".into(), page("gone", WIDTH, 800, vec![], vec![]));

    FixtureApp {
        app_id: app_id.into(),
        initial_page: if popup { "home-popup" } else { "home" }.into(),
        pages,
    }
}

/// App ids for a corpus of `n` synthetic sites.
pub fn site_ids(n: usize) -> Vec<String> {
    const TLDS: &[&str] = &["com", "org", "net", "io", "co.uk"];
    (0..n)
        .map(|i| {
            let name = format!("{}{i}", TOPICS[i % TOPICS.len()]);
            format!("www.{name}.{}", TLDS[i % TLDS.len()])
        })
        .collect()
}
