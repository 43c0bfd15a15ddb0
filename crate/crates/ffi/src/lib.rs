//! C ABI for vuln-ner.
//!
//! Every function returns a [`VnerStatus`]; on failure the message is
//! available from [`vner_last_error`] on the same thread. Objects are opaque
//! handles released with their `_free` function. Tags are encoded as
//! `0 = SN`, `1 = SV`, `2 = O`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vuln_ner::corpus::{compute_statistics, parse_conll, serialize_conll, Tag, TaggedSentence};
use vuln_ner::evaluation::{token_prf, weighted_f1, EvalReport, TagMetrics};
use vuln_ner::structshot::{nn_tag, viterbi_decode, EmissionTable, SupportEntry, SupportSet, TransitionModel};
use vuln_ner::tagger::TaggerModel;
use vuln_ner::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VnerStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Domain = 4,
    Io = 5,
    Config = 6,
    Training = 7,
    Model = 8,
    OutOfRange = 9,
    Internal = 10,
}

/// Parsed sentences.
pub struct VnerSentences(Vec<TaggedSentence>);

/// A trained tagger loaded from a model directory.
pub struct VnerTagger(TaggerModel);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VnerTagMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision_undefined: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VnerReport {
    pub sn: VnerTagMetrics,
    pub sv: VnerTagMetrics,
    pub n_tokens: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VnerStats {
    pub n_sentences: usize,
    pub sentence_entity_prop: f64,
    pub token_prop_sn: f64,
    pub token_prop_sv: f64,
    pub nononly_prop: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> VnerStatus {
    match e {
        Error::Parse { .. } | Error::UnknownTag { .. } => VnerStatus::Parse,
        Error::File { source, .. } => status_of(source),
        Error::Io(_) => VnerStatus::Io,
        Error::Domain(_) => VnerStatus::Domain,
        Error::Config(_) | Error::Json(_) => VnerStatus::Config,
        Error::Training { .. } => VnerStatus::Training,
        Error::Tensor(_) | Error::Tokenizer(_) => VnerStatus::Model,
    }
}

enum Fail {
    Null(&'static str),
    Utf8,
    Range(String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> VnerStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            VnerStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is null"));
            VnerStatus::NullPointer
        }
        Ok(Err(Fail::Utf8)) => {
            set_error("string is not valid UTF-8".into());
            VnerStatus::InvalidUtf8
        }
        Ok(Err(Fail::Range(m))) => {
            set_error(m);
            VnerStatus::OutOfRange
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            VnerStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Utf8)
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_arg<T>(p: *mut T, v: T, what: &'static str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    p.write(v);
    Ok(())
}

fn tag_code(t: Tag) -> u8 {
    t.index() as u8
}

fn tag_from(code: u8) -> Result<Tag, Fail> {
    Tag::from_index(code as usize).ok_or_else(|| Fail::Range(format!("tag code {code} is not 0, 1 or 2")))
}

fn metrics(m: &TagMetrics) -> VnerTagMetrics {
    VnerTagMetrics {
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        support: m.support,
        tp: m.tp,
        fp: m.fp,
        fn_: m.fn_,
        precision_undefined: m.precision_undefined,
    }
}

fn from_metrics(m: &VnerTagMetrics) -> TagMetrics {
    TagMetrics {
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        support: m.support,
        tp: m.tp,
        fp: m.fp,
        fn_: m.fn_,
        precision_undefined: m.precision_undefined,
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn vner_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vner_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses CoNLL text (`token<TAB>tag`, blank line between sentences).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vner_sentences_parse(text: *const c_char, out: *mut *mut VnerSentences) -> VnerStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let s = parse_conll(text)?;
        out_arg(out, Box::into_raw(Box::new(VnerSentences(s))), "out")
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vner_sentences_free(s: *mut VnerSentences) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vner_sentences_count(s: *const VnerSentences) -> usize {
    s.as_ref().map_or(0, |s| s.0.len())
}

/// Token count of sentence `index`.
///
/// # Safety
/// `s` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vner_sentence_len(s: *const VnerSentences, index: usize, out: *mut usize) -> VnerStatus {
    guard(|| {
        let s = ref_arg(s, "sentences")?;
        let sent = s.0.get(index).ok_or_else(|| Fail::Range(format!("no sentence {index}")))?;
        out_arg(out, sent.len(), "out")
    })
}

/// Copies the tag codes of sentence `index` into `tags` (capacity `cap`).
///
/// # Safety
/// `tags` must have room for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn vner_sentence_tags(s: *const VnerSentences, index: usize, tags: *mut u8, cap: usize) -> VnerStatus {
    guard(|| {
        let s = ref_arg(s, "sentences")?;
        let sent = s.0.get(index).ok_or_else(|| Fail::Range(format!("no sentence {index}")))?;
        if cap < sent.len() {
            return Err(Fail::Range(format!("buffer of {cap} is smaller than {} tags", sent.len())));
        }
        if tags.is_null() {
            return Err(Fail::Null("tags"));
        }
        for (i, t) in sent.tags().iter().enumerate() {
            tags.add(i).write(tag_code(*t));
        }
        Ok(())
    })
}

/// Renders the sentences back to CoNLL. Free the result with
/// [`vner_string_free`].
///
/// # Safety
/// `s` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vner_sentences_to_conll(s: *const VnerSentences, out: *mut *mut c_char) -> VnerStatus {
    guard(|| {
        let s = ref_arg(s, "sentences")?;
        let c = CString::new(serialize_conll(&s.0)).map_err(|_| Fail::Range("text contains NUL".into()))?;
        out_arg(out, c.into_raw(), "out")
    })
}

/// # Safety
/// `p` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn vner_string_free(p: *mut c_char) {
    if !p.is_null() {
        drop(CString::from_raw(p));
    }
}

/// # Safety
/// `s` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vner_stats(s: *const VnerSentences, out: *mut VnerStats) -> VnerStatus {
    guard(|| {
        let st = compute_statistics(&ref_arg(s, "sentences")?.0)?;
        out_arg(
            out,
            VnerStats {
                n_sentences: st.n_sentences,
                sentence_entity_prop: st.sentence_entity_prop,
                token_prop_sn: st.token_prop_sn,
                token_prop_sv: st.token_prop_sv,
                nononly_prop: st.nononly_prop,
            },
            "out",
        )
    })
}

/// Token-level per-tag precision, recall and F1 of `pred` against `gold`.
///
/// # Safety
/// Both handles live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vner_token_prf(
    gold: *const VnerSentences,
    pred: *const VnerSentences,
    out: *mut VnerReport,
) -> VnerStatus {
    guard(|| {
        let g: Vec<Vec<Tag>> = ref_arg(gold, "gold")?.0.iter().map(|s| s.tags().to_vec()).collect();
        let p: Vec<Vec<Tag>> = ref_arg(pred, "pred")?.0.iter().map(|s| s.tags().to_vec()).collect();
        let r = token_prf(&g, &p)?;
        out_arg(
            out,
            VnerReport {
                sn: metrics(&r.sn),
                sv: metrics(&r.sv),
                n_tokens: r.n_tokens,
            },
            "out",
        )
    })
}

/// Support-weighted mean of the SN and SV F1 scores.
///
/// # Safety
/// `report` readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vner_weighted_f1(report: *const VnerReport, out: *mut f64) -> VnerStatus {
    guard(|| {
        let r = ref_arg(report, "report")?;
        let rep = EvalReport {
            sn: from_metrics(&r.sn),
            sv: from_metrics(&r.sv),
            n_tokens: r.n_tokens,
            ..Default::default()
        };
        out_arg(out, weighted_f1(&rep)?, "out")
    })
}

/// Most probable tag sequence. `emissions` holds `len` rows of 3
/// probabilities (SN, SV, O); `transition` is row-major 3x3 (from, to).
/// `start`, `end` and each transition row must be strictly positive distributions.
///
/// # Safety
/// Arrays must have the stated lengths; `out_tags` room for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn vner_viterbi(
    emissions: *const f64,
    len: usize,
    start: *const f64,
    transition: *const f64,
    end: *const f64,
    out_tags: *mut u8,
) -> VnerStatus {
    guard(|| {
        let e = slice_arg(emissions, len * 3, "emissions")?;
        let s = slice_arg(start, 3, "start")?;
        let t = slice_arg(transition, 9, "transition")?;
        let en = slice_arg(end, 3, "end")?;
        let rows = e.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        let model = TransitionModel::new(
            [s[0], s[1], s[2]],
            [[t[0], t[1], t[2]], [t[3], t[4], t[5]], [t[6], t[7], t[8]]],
            [en[0], en[1], en[2]],
        )?;
        let tags = viterbi_decode(&EmissionTable::new(rows)?, &model)?;
        if len > 0 && out_tags.is_null() {
            return Err(Fail::Null("out_tags"));
        }
        for (i, t) in tags.iter().enumerate() {
            out_tags.add(i).write(tag_code(*t));
        }
        Ok(())
    })
}

/// Nearest support entry of `query`. `support` holds `n` row-major vectors
/// of `dim` floats with tag codes in `support_tags`. Vectors are L2
/// normalised before comparison; `out_distance` is the squared distance.
///
/// # Safety
/// Arrays must have the stated lengths; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn vner_nn_tag(
    query: *const f32,
    dim: usize,
    support: *const f32,
    support_tags: *const u8,
    n: usize,
    out_tag: *mut u8,
    out_distance: *mut f64,
) -> VnerStatus {
    guard(|| {
        let q = slice_arg(query, dim, "query")?;
        let v = slice_arg(support, n * dim, "support")?;
        let tags = slice_arg(support_tags, n, "support_tags")?;
        let entries = tags
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                Ok(SupportEntry {
                    embedding: v[i * dim..(i + 1) * dim].to_vec(),
                    tag: tag_from(t)?,
                    sentence_id: format!("s{i}"),
                    token_index: 0,
                })
            })
            .collect::<Result<Vec<_>, Fail>>()?;
        let set = SupportSet::from_entries(entries, false)?;
        let (tag, d) = nn_tag(q, &set)?;
        out_arg(out_tag, tag_code(tag), "out_tag")?;
        out_arg(out_distance, d, "out_distance")
    })
}

/// Loads a model directory written by the `train` command.
///
/// # Safety
/// `dir` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vner_tagger_load(dir: *const c_char, out: *mut *mut VnerTagger) -> VnerStatus {
    guard(|| {
        let m = TaggerModel::load(Path::new(str_arg(dir, "dir")?))?;
        out_arg(out, Box::into_raw(Box::new(VnerTagger(m))), "out")
    })
}

/// # Safety
/// `t` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vner_tagger_free(t: *mut VnerTagger) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Tags `input`; the result is a new sentence handle with predicted tags.
///
/// # Safety
/// Handles live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vner_tagger_predict(
    tagger: *const VnerTagger,
    input: *const VnerSentences,
    out: *mut *mut VnerSentences,
) -> VnerStatus {
    guard(|| {
        let t = ref_arg(tagger, "tagger")?;
        let s = ref_arg(input, "input")?;
        let pred = t.0.predict(&s.0)?;
        let tagged = s
            .0
            .iter()
            .zip(pred)
            .map(|(x, p)| x.retagged(p))
            .collect::<vuln_ner::Result<Vec<_>>>()?;
        out_arg(out, Box::into_raw(Box::new(VnerSentences(tagged))), "out")
    })
}

/// Final-layer vector of every token of sentence `index`, row-major into
/// `out` (capacity `cap` floats). `out_dim` receives the dimension.
///
/// # Safety
/// Handles live; `out` has room for `cap` floats; `out_dim` writable.
#[no_mangle]
pub unsafe extern "C" fn vner_tagger_embed(
    tagger: *const VnerTagger,
    input: *const VnerSentences,
    index: usize,
    out: *mut f32,
    cap: usize,
    out_dim: *mut usize,
) -> VnerStatus {
    guard(|| {
        let t = ref_arg(tagger, "tagger")?;
        let s = ref_arg(input, "input")?;
        let sent = s.0.get(index).ok_or_else(|| Fail::Range(format!("no sentence {index}")))?;
        let emb = t.0.extract_token_embeddings(std::slice::from_ref(sent))?;
        let dim = t.0.config().hidden_size;
        out_arg(out_dim, dim, "out_dim")?;
        let flat: Vec<f32> = emb.into_iter().flatten().flatten().collect();
        if cap < flat.len() {
            return Err(Fail::Range(format!("buffer of {cap} floats is smaller than {}", flat.len())));
        }
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        ptr::copy_nonoverlapping(flat.as_ptr(), out, flat.len());
        Ok(())
    })
}
