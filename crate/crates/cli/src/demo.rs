//! A small self-contained world plus a scripted model that drives every
//! stage offline. `webagg demo-init <dir>` writes it to disk.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde_json::json;
use webagg_core::gateway::{Matcher, ResponseScript, ScriptEntry};
use webagg_core::web::{quote, Attachment, ElementKind, ElementRecord, LinkRecord, PageRecord};

pub const CONFIG_FILE: &str = "demo.toml";
pub const SCRIPT_FILE: &str = "script.json";
pub const BLACKLIST_FILE: &str = "blacklist.txt";
pub const WORLD_DIR: &str = "world";

pub const QUERIES: [&str; 4] = [
    "Harbor Herons basketball club",
    "Norvale Bank investor relations",
    "Tessaly regional portal",
    "Lower Quay gallery exhibitions",
];

pub const HERONS_Q: &str = "How many regular-season wins did Port Alder's professional basketball club collect across the 2023 and 2024 seasons combined, minus the number of years between the club's founding and its first championship?";
pub const HERONS_A: &str = "83";
pub const NORVALE_DRAFT_Q: &str = "What revenue did the Emberton-based regional lender report for 2024, in millions of USD?";
pub const NORVALE_Q: &str = "Across the five-year revenue table published by the Emberton-based regional lender, what was the average year-over-year revenue increase in millions of USD?";
pub const NORVALE_A: &str = "29.5";
pub const TESSALY_Q: &str = "Of the two largest cities that the 214 km river of the coastal region flows through, which grew faster between the 2010 census and the 2020 population count, and by what percentage rounded to one decimal place?";
pub const TESSALY_A: &str = "Sedra, 9.2%";

const CONFIG: &str = r#"seed = 20240611
workers = 2
out_dir = "run"

[backend]
kind = "scripted"
script = "script.json"

[retry]
max_attempts = 2
base_delay_ms = 0
max_delay_ms = 0
jitter = false

[web]
fixture = "world"
blacklist = "blacklist.txt"

[anchors]
queries = [
    "Harbor Herons basketball club",
    "Norvale Bank investor relations",
    "Tessaly regional portal",
    "Lower Quay gallery exhibitions",
]
per_query = 1

[synthesize]
min_visits = 7

[qc]
max_ratio = 2.0

[sample]
attempts = 2

[eval]
k = 2
"#;

/// Everything `demo-init` writes, keyed by path relative to the target dir.
pub struct DemoBundle {
    pub pages: Vec<PageRecord>,
    pub files: BTreeMap<String, Vec<u8>>,
    pub script: ResponseScript,
}

impl DemoBundle {
    pub fn build() -> Self {
        Self {
            pages: pages(),
            files: files(),
            script: script(),
        }
    }

    /// Relative path and bytes for every file in the bundle.
    pub fn render(&self) -> BTreeMap<String, Vec<u8>> {
        let mut out = BTreeMap::new();
        let mut lines = String::new();
        for p in &self.pages {
            lines.push_str(&serde_json::to_string(p).expect("page serializes"));
            lines.push('\n');
        }
        out.insert(format!("{WORLD_DIR}/pages.jsonl"), lines.into_bytes());
        for (path, bytes) in &self.files {
            out.insert(format!("{WORLD_DIR}/{path}"), bytes.clone());
        }
        let mut script = serde_json::to_string_pretty(&self.script).expect("script serializes");
        script.push('\n');
        out.insert(SCRIPT_FILE.into(), script.into_bytes());
        out.insert(BLACKLIST_FILE.into(), b"# benchmark mirrors\nhuggingface\n".to_vec());
        out.insert(CONFIG_FILE.into(), CONFIG.as_bytes().to_vec());
        out
    }
}

pub fn write_demo(dir: &Path) -> io::Result<Vec<String>> {
    let files = DemoBundle::build().render();
    for (rel, bytes) in &files {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, bytes)?;
    }
    Ok(files.into_keys().collect())
}

fn page(url: &str, title: &str, text: &str, links: &[&str]) -> PageRecord {
    PageRecord {
        url: url.into(),
        title: title.into(),
        text: text.into(),
        elements: Vec::new(),
        links: links.iter().map(|l| LinkRecord::Internal((*l).into())).collect(),
        attachments: Vec::new(),
        exception: None,
    }
}

fn attach(mut p: PageRecord, path: &str, mime: &str) -> PageRecord {
    p.attachments.push(Attachment {
        path: path.into(),
        mime: mime.into(),
    });
    p
}

fn failing(mut p: PageRecord, kind: &str) -> PageRecord {
    p.exception = Some(kind.into());
    p
}

const HERONS: &str = "https://herons.example";
const HOOPS: &str = "https://hoopsref.example";
const NORVALE: &str = "https://norvale.example";
const MARKET: &str = "https://marketwatch-sim.example/norvale";
const NEWS: &str = "https://finance-news.example";
const TESSALY: &str = "https://tessaly.example";
const GALLERY: &str = "https://gallery.example";

fn u(base: &str, path: &str) -> String {
    format!("{base}{path}")
}

fn pages() -> Vec<PageRecord> {
    let h = |p: &str| u(HERONS, p);
    let n = |p: &str| u(NORVALE, p);
    let t = |p: &str| u(TESSALY, p);
    let mut census = page(
        &t("/census"),
        "Tessaly census lookup",
        "Look up the 2010 census count for any chartered city of Tessaly. Type a city name and press Go.",
        &[TESSALY],
    );
    census.elements = vec![
        ElementRecord {
            id: "city".into(),
            kind: ElementKind::Textbox,
            label: "City name".into(),
            target: None,
        },
        ElementRecord {
            id: "go".into(),
            kind: ElementKind::Button,
            label: "Go".into(),
            target: Some(t("/census/results")),
        },
    ];
    vec![
        page(
            HERONS,
            "Harbor Herons Basketball Club",
            "The Harbor Herons are the professional basketball club of Port Alder. Follow the Herons through the roster, \
             season records, player statistics and club history.",
            &[&h("/roster"), &h("/stats"), &h("/season/2023"), &h("/season/2024"), &h("/history"), &u(HOOPS, "/teams/herons")],
        ),
        page(
            &h("/roster"),
            "Herons roster",
            "Current roster with listed heights: Dario Mense 201 cm, Kofi Aldana 193 cm, Ilya Brandt 208 cm, \
             Samir Oyelaran 188 cm, Teo Varga 214 cm.",
            &[HERONS],
        ),
        page(
            &h("/stats"),
            "Herons player statistics",
            "Points per game, 2024 season: Dario Mense 21.4, Kofi Aldana 17.9, Ilya Brandt 12.2, Samir Oyelaran 9.8, Teo Varga 8.1.",
            &[HERONS],
        ),
        page(
            &h("/season/2023"),
            "Herons 2023 season",
            "The 2023 regular season ended with 45 wins and 37 losses, good for fourth place in the Coastal Division.",
            &[HERONS, &h("/season/2024")],
        ),
        page(
            &h("/season/2024"),
            "Herons 2024 season",
            "In 2024 the Herons finished the regular season with 50 wins and 32 losses, their best record in a decade.",
            &[HERONS, &h("/season/2023")],
        ),
        page(
            &h("/history"),
            "Herons club history",
            "The club was founded in 1987 in Port Alder. The Herons won league titles in 1999 and 2011. \
             Their current arena, the Saltworks Dome, opened in 2004.",
            &[HERONS],
        ),
        page(
            &u(HOOPS, "/teams/herons"),
            "Harbor Herons franchise index",
            "Regular-season wins by season: 2020 33, 2021 41, 2022 38, 2023 45, 2024 50.",
            &[&u(HOOPS, "/league"), HERONS],
        ),
        page(
            &u(HOOPS, "/league"),
            "Coastal league standings",
            "2024 standings: Gull City Surge 55-27, Harbor Herons 50-32, Marlow Pilots 44-38, Eastbank Tides 30-52.",
            &[&u(HOOPS, "/teams/herons")],
        ),
        failing(page(&u(HOOPS, "/verify"), "Verification required", "Please verify you are human.", &[]), "captcha"),
        page(
            NORVALE,
            "Norvale Bank investor relations",
            "Norvale Bank is a regional lender headquartered in Emberton. Investor relations: annual reports, board of \
             directors and press releases.",
            &[&n("/reports"), &n("/board"), &n("/press/2024-dividend")],
        ),
        attach(
            page(
                &n("/reports"),
                "Norvale annual reports",
                "Five-year revenue summary in millions of USD is attached as a CSV file.",
                &[NORVALE],
            ),
            "files/norvale_revenue.csv",
            "text/csv",
        ),
        page(
            &n("/board"),
            "Norvale board of directors",
            "Directors and appointment dates: Helena Ruiz, chair, 2015-03-01; Marcus Oduya 2018-09-15; \
             Petra Lindqvist 2021-01-11; Amal Haddad 2023-06-30.",
            &[NORVALE],
        ),
        page(
            &n("/press/2024-dividend"),
            "Norvale raises annual dividend",
            "The board approved an annual dividend of 1.84 USD per share for 2024, up from 1.60 USD a year earlier.",
            &[NORVALE],
        ),
        page(
            MARKET,
            "Norvale Bank share price",
            "Quarterly closing prices in USD for 2024: Q1 38.20, Q2 39.75, Q3 41.10, Q4 42.60.",
            &[],
        ),
        page(
            NEWS,
            "Finance news",
            "Top stories: regional lenders consolidate as Norvale agrees merger with Ashcombe Savings.",
            &[&u(NEWS, "/norvale-merger")],
        ),
        page(
            &u(NEWS, "/norvale-merger"),
            "Norvale to merge with Ashcombe Savings",
            "The merger agreement was signed on 2024-06-03 and the deal closed on 2024-11-29 after regulatory approval.",
            &[NEWS],
        ),
        page(
            TESSALY,
            "Tessaly regional portal",
            "Official portal of the coastal region of Tessaly. Explore cities, rivers, climate, census records, the \
             economy and maps.",
            &[&t("/cities"), &t("/rivers"), &t("/climate"), &t("/census"), &t("/economy"), &t("/maps")],
        ),
        page(
            &t("/cities"),
            "Chartered cities of Tessaly",
            "Population at the 2020 count: Varn 182,400; Olbrook 96,750; Sedra 64,300; Calith 41,900.",
            &[TESSALY],
        ),
        page(
            &t("/rivers"),
            "Rivers of Tessaly",
            "The Amsel (214 km) flows through Varn and Sedra. The Tarn (96 km) flows through Olbrook. \
             The Lisk (131 km) flows through Calith and Sedra.",
            &[TESSALY],
        ),
        attach(
            page(
                &t("/climate"),
                "Tessaly climate",
                "Climate normals for the region are published as a PDF report.",
                &[TESSALY],
            ),
            "files/tessaly_climate.pdf",
            "application/pdf",
        ),
        census,
        page(
            &t("/census/results"),
            "Census 2010 results",
            "2010 census counts: Varn 171,000; Olbrook 99,200; Sedra 58,900; Calith 40,100.",
            &[&t("/census")],
        ),
        page(
            &t("/economy"),
            "Economy of Tessaly",
            "Fishing, shipbuilding and tourism employ most residents. Varn hosts the region's largest port.",
            &[TESSALY],
        ),
        failing(page(&t("/maps"), "Interactive maps", "Map viewer.", &[TESSALY]), "captcha"),
        attach(
            page(
                GALLERY,
                "Gallery of the Lower Quay",
                "Exhibitions at the Gallery of the Lower Quay. The current poster is attached.",
                &[&u(GALLERY, "/exhibits")],
            ),
            "files/quay_poster.png",
            "image/png",
        ),
        page(
            &u(GALLERY, "/exhibits"),
            "Lower Quay exhibitions",
            "Past exhibitions: Tide Lines (2022), Harbor Light (2023).",
            &[GALLERY],
        ),
        page(
            "https://huggingface.co/datasets/port-alder-hoops",
            "port-alder-hoops dataset",
            "Harbor Herons basketball club question answer pairs with solutions.",
            &[],
        ),
    ]
}

fn files() -> BTreeMap<String, Vec<u8>> {
    let mut f = BTreeMap::new();
    f.insert(
        "files/norvale_revenue.csv".into(),
        b"year,revenue_musd\n2020,412\n2021,436\n2022,468\n2023,495\n2024,530\n".to_vec(),
    );
    f.insert(
        "files/tessaly_climate.pdf".into(),
        b"%PDF-1.4\n% Tessaly climate normals\n%%EOF\n".to_vec(),
    );
    f.insert(
        "files/quay_poster.png".into(),
        b"\x89PNG\r\n\x1a\n\0\0\0\rIHDR\0\0\0\x01\0\0\0\x01\x08\x02\0\0\0".to_vec(),
    );
    f
}

fn tag(t: &str) -> Matcher {
    Matcher::ModelTag(t.into())
}

fn act(thought: &str, calls: &[String]) -> String {
    format!("Thought: {thought}\nAction:\n```\n{}\n```", calls.join("\n"))
}

fn fin(thought: &str, answer: &str) -> String {
    format!("Thought: {thought}\nFinal Answer: {answer}")
}

fn visit(url: &str) -> String {
    format!("Visit({})", quote(url))
}

fn call(tool: &str, args: &[&str]) -> String {
    let args: Vec<String> = args.iter().map(|a| quote(a)).collect();
    format!("{tool}({})", args.join(", "))
}

fn synth_json(topic: &str, q: &str, a: &str, urls: &[&str]) -> String {
    json!({"topic": topic, "question": q, "answer": a, "context": {"URLs": urls}}).to_string()
}

fn checklist(pass_aggregation: bool, advice: &str) -> String {
    json!({
        "Self-Containment": 1,
        "Retrieval Necessity": 1,
        "Aggregation Necessity": u8::from(pass_aggregation),
        "Clarity": 1,
        "Temporal Stability": 1,
        "Advice": advice,
    })
    .to_string()
}

fn checker_json(domain: &str, ops: &[&str]) -> String {
    json!({
        "Evidence Passed": 1,
        "Question Passed": 1,
        "Answer Passed": 1,
        "Domain": domain,
        "Aggregation_Operation": {"type": ops},
    })
    .to_string()
}

#[derive(Default)]
struct Builder {
    entries: Vec<ScriptEntry>,
}

impl Builder {
    fn turns(&mut self, when: Matcher, turns: Vec<String>) {
        for t in turns {
            self.entries.push(ScriptEntry::reply(when.clone(), t));
        }
    }

    fn once(&mut self, when: Matcher, reply: impl Into<String>) {
        self.entries.push(ScriptEntry::reply(when, reply));
    }

    fn always(&mut self, when: Matcher, reply: impl Into<String>) {
        self.entries.push(ScriptEntry::reply(when, reply).persistent());
    }
}

fn script() -> ResponseScript {
    let mut b = Builder::default();
    let h = |p: &str| u(HERONS, p);
    let n = |p: &str| u(NORVALE, p);
    let t = |p: &str| u(TESSALY, p);

    for (url, domain) in [(HERONS, "Sport"), (NORVALE, "Finance"), (TESSALY, "Geography"), (GALLERY, "Art")] {
        b.always(
            Matcher::All(vec![tag("labeler"), Matcher::Contains(format!("URL: {url}\n"))]),
            domain,
        );
    }
    b.always(
        Matcher::Attachment("files/tessaly_climate.pdf".into()),
        "Tessaly climate normals 1991-2020\nstation,annual_rainfall_mm\nVarn,812\nOlbrook,905\nSedra,760\nCalith,990",
    );
    b.always(
        Matcher::Attachment("files/quay_poster.png".into()),
        "Poster reading 'Salt and Iron', Gallery of the Lower Quay, 1 March to 30 May 2024.",
    );

    let synth = |anchor: &str| Matcher::All(vec![tag("synthesizer"), Matcher::TaskContains(format!("URL:\n{anchor}\n"))]);
    let herons_urls = [h("/season/2023"), h("/season/2024"), h("/history")];
    b.turns(
        synth(HERONS),
        vec![
            act("Start from the club home page.", &[visit(HERONS)]),
            act("Check the roster for context.", &[visit(&h("/roster"))]),
            act("Look at player statistics.", &[visit(&h("/stats"))]),
            act("Read the 2023 record.", &[visit(&h("/season/2023"))]),
            act("Read the 2024 record.", &[visit(&h("/season/2024"))]),
            act("Capture the season page as evidence.", &[call("Screenshot", &["herons_2024.png"])]),
            act("Founding year and titles are on the history page.", &[visit(&h("/history"))]),
            act("Cross-check wins on the reference site.", &[visit(&u(HOOPS, "/teams/herons"))]),
            act("Wins 45 and 50, founded 1987, first title 1999.", &[call("Compute", &["45 + 50 - (1999 - 1987)"])]),
            fin(
                "The question combines two season records with a date gap.",
                &synth_json("Harbor Herons records", HERONS_Q, HERONS_A, &herons_urls.each_ref().map(String::as_str)),
            ),
        ],
    );
    b.once(
        Matcher::All(vec![tag("extractor"), Matcher::Contains(HERONS_Q.into())]),
        "Element->Retrieve->season win totals\nElement->Math->sum wins and subtract a gap\nTemporal->TempCalc->years from founding to first title",
    );
    b.once(Matcher::All(vec![tag("refiner"), Matcher::Contains(HERONS_Q.into())]), checklist(true, ""));

    b.turns(
        synth(NORVALE),
        vec![
            act("Open the investor relations page.", &[visit(NORVALE)]),
            act("Revenue figures should be in the reports.", &[visit(&n("/reports"))]),
            act("Read the attached CSV.", &[call("FileRead", &["files/norvale_revenue.csv"])]),
            act("Check the board page.", &[visit(&n("/board"))]),
            act("Dividend news.", &[visit(&n("/press/2024-dividend"))]),
            act("Share prices on a market site.", &[visit(MARKET)]),
            act("Keep a screenshot of the price table.", &[call("Screenshot", &["norvale_prices.png"])]),
            act("Look for related news.", &[visit(NEWS)]),
            act("Read the merger story.", &[visit(&u(NEWS, "/norvale-merger"))]),
            fin(
                "A direct revenue question as a first draft.",
                &synth_json("Norvale revenue", NORVALE_DRAFT_Q, "530", &[&n("/reports")]),
            ),
            act(
                "Use all five years: average the yearly increases.",
                &[call("Compute", &["mean([436 - 412, 468 - 436, 495 - 468, 530 - 495])"])],
            ),
            fin(
                "Revised to need several aggregation steps.",
                &synth_json("Norvale revenue growth", NORVALE_Q, NORVALE_A, &[&n("/reports")]),
            ),
        ],
    );
    b.once(
        Matcher::All(vec![tag("extractor"), Matcher::Contains(NORVALE_DRAFT_Q.into())]),
        "Element->Retrieve->2024 revenue",
    );
    b.once(
        Matcher::All(vec![tag("refiner"), Matcher::Contains(NORVALE_DRAFT_Q.into())]),
        checklist(false, "Combine several figures from the revenue table instead of a single lookup."),
    );
    b.once(
        Matcher::All(vec![tag("extractor"), Matcher::Contains(NORVALE_Q.into())]),
        "Element->Retrieve->revenue table from the CSV\nTemporal->Change->year-over-year increases\nScientific->Statistic->mean of the increases",
    );
    b.once(Matcher::All(vec![tag("refiner"), Matcher::Contains(NORVALE_Q.into())]), checklist(true, ""));

    let tessaly_urls = [t("/cities"), t("/rivers"), t("/census/results")];
    b.turns(
        synth(TESSALY),
        vec![
            act("Open the regional portal.", &[visit(TESSALY)]),
            act("City populations.", &[visit(&t("/cities"))]),
            act("Which cities does each river pass?", &[visit(&t("/rivers"))]),
            act("Older counts come from the census lookup.", &[visit(&t("/census"))]),
            act("Query the census form.", &[call("Input", &["Sedra", "city"])]),
            act("Submit.", &[call("Click", &["go"])]),
            act("Climate data for context.", &[visit(&t("/climate"))]),
            act("Read the climate report.", &[call("FileRead", &["files/tessaly_climate.pdf"])]),
            act("Economy page.", &[visit(&t("/economy"))]),
            act("Capture the census results.", &[call("Screenshot", &["tessaly_census.png"])]),
            act("Sedra growth 2010 to 2020.", &[call("Compute", &["round((64300 - 58900) / 58900 * 100, 1)"])]),
            act("Varn growth 2010 to 2020.", &[call("Compute", &["round((182400 - 171000) / 171000 * 100, 1)"])]),
            fin(
                "Sedra grew 9.2% against 6.7% for Varn.",
                &synth_json("Tessaly city growth", TESSALY_Q, TESSALY_A, &tessaly_urls.each_ref().map(String::as_str)),
            ),
        ],
    );
    b.once(
        Matcher::All(vec![tag("extractor"), Matcher::Contains(TESSALY_Q.into())]),
        "Set->Filter->cities on the 214 km river\nTemporal->Change->population change from 2010 to 2020\nElement->Math->percentage growth and comparison",
    );
    b.once(Matcher::All(vec![tag("refiner"), Matcher::Contains(TESSALY_Q.into())]), checklist(true, ""));

    b.turns(
        synth(GALLERY),
        vec![
            act("Open the gallery.", &[visit(GALLERY)]),
            act("Describe the poster.", &[call("ImageCaption", &["files/quay_poster.png"])]),
            act("Past exhibitions.", &[visit(&u(GALLERY, "/exhibits"))]),
            act("Keep a screenshot.", &[call("Screenshot", &["gallery.png"])]),
            fin(
                "Enough for a question.",
                &synth_json(
                    "Lower Quay posters",
                    "Which exhibition did the harbor gallery advertise for spring 2024?",
                    "Salt and Iron",
                    &[GALLERY],
                ),
            ),
        ],
    );

    let checker = |phrase: &str| Matcher::All(vec![tag("checker"), Matcher::TaskContains(phrase.into())]);
    b.turns(
        checker("Port Alder's professional basketball club"),
        vec![
            act("Verify both season records.", &[visit(&h("/season/2023")), visit(&h("/season/2024"))]),
            act("Verify founding and title years.", &[visit(&h("/history"))]),
            act("Recompute.", &[call("Compute", &["45 + 50 - (1999 - 1987)"])]),
            fin(
                "Evidence supports 83.",
                &checker_json("Sport", &["Element->Retrieve", "Element->Math", "Temporal->TempCalc"]),
            ),
        ],
    );
    b.turns(
        checker("average year-over-year revenue increase"),
        vec![
            act("Open the reports page.", &[visit(&n("/reports"))]),
            act("Read the CSV.", &[call("FileRead", &["files/norvale_revenue.csv"])]),
            act("Recompute.", &[call("Compute", &["mean([24, 32, 27, 35])"])]),
            fin(
                "Evidence supports 29.5.",
                &checker_json("Finance", &["Element->Retrieve", "Temporal->Change", "Scientific->Statistic"]),
            ),
        ],
    );
    b.turns(
        checker("the 214 km river of the coastal region"),
        vec![
            act("Check cities and rivers.", &[visit(&t("/cities")), visit(&t("/rivers"))]),
            act("Check the census results.", &[visit(&t("/census/results"))]),
            act("Recompute Sedra.", &[call("Compute", &["round((64300 - 58900) / 58900 * 100, 1)"])]),
            fin(
                "Evidence supports Sedra at 9.2%.",
                &checker_json("Geography", &["Set->Filter", "Temporal->Change", "Element->Math"]),
            ),
        ],
    );

    let solver = |phrase: &str| Matcher::All(vec![tag("solver"), Matcher::TaskContains(phrase.into())]);
    b.turns(
        solver("Port Alder's professional basketball club"),
        vec![
            act("Find the club.", &[call("Search", &["Port Alder professional basketball club"])]),
            act("Open the club site.", &[visit(HERONS)]),
            act("Season records and history.", &[visit(&h("/season/2023")), visit(&h("/season/2024")), visit(&h("/history"))]),
            act("Combine.", &[call("Compute", &["45 + 50 - (1999 - 1987)"])]),
            fin("95 wins minus a 12 year gap.", "83"),
            act("Open the club site.", &[visit(HERONS)]),
            act("Season pages.", &[visit(&h("/season/2023")), visit(&h("/season/2024"))]),
            act("History page.", &[visit(&h("/history"))]),
            fin("45 plus 50 minus 12.", "83 wins"),
        ],
    );
    b.turns(
        solver("average year-over-year revenue increase"),
        vec![
            act("Find the lender.", &[call("Search", &["Norvale Bank investor relations"])]),
            act("Reports page.", &[visit(&n("/reports"))]),
            fin("The increases average roughly 29.", "29"),
            act("Reports page.", &[visit(&n("/reports"))]),
            act("Read the CSV.", &[call("FileRead", &["files/norvale_revenue.csv"])]),
            act("Average the increases.", &[call("Compute", &["mean([436 - 412, 468 - 436, 495 - 468, 530 - 495])"])]),
            fin("The mean increase is 29.50.", "29.50"),
        ],
    );
    b.turns(
        solver("the 214 km river of the coastal region"),
        vec![
            act("Try the map viewer first.", &[visit(&t("/maps"))]),
            act("Maps are blocked; use the rivers page.", &[visit(&t("/rivers"))]),
            act("Populations and census.", &[visit(&t("/cities")), visit(&t("/census/results"))]),
            act("Sedra growth.", &[call("Compute", &["round((64300 - 58900) / 58900 * 100, 1)"])]),
            fin("Sedra grew 9.2%, Varn 6.7%.", TESSALY_A),
            act("Look up the cities.", &["Lookup(\"Sedra\")".to_string()]),
            act("Use the rivers page instead.", &[visit(&t("/rivers"))]),
            act("Populations and census.", &[visit(&t("/cities")), visit(&t("/census/results"))]),
            fin("Sedra grew faster.", TESSALY_A),
        ],
    );
    b.always(
        Matcher::All(vec![tag("judge"), Matcher::Contains("Predicted answer:\n83 wins\n".into())]),
        "CORRECT\nThe prediction states the reference number with its unit.",
    );
    b.always(
        Matcher::All(vec![tag("judge"), Matcher::Contains("Predicted answer:\n29\n".into())]),
        "INCORRECT\nThe prediction rounds away the half unit in the reference.",
    );
    ResponseScript::new(b.entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundle_is_deterministic() {
        assert_eq!(DemoBundle::build().render(), DemoBundle::build().render());
    }

    #[test]
    fn config_parses() {
        let cfg = webagg_core::pipeline::PipelineConfig::parse(CONFIG).unwrap();
        assert_eq!(cfg.anchors.queries, QUERIES);
        cfg.validate().unwrap();
    }
}
