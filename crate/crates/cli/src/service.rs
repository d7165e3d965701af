//! HTTP API over shared, immutable weights.
//!
//! `GET /api/health`, `POST /api/estimate` (multipart `image`) and
//! `POST /api/restore` (multipart `image`, optional `map`). Images travel as
//! PNG. Restoration is blind when no map is sent.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use compdeg_core::attributes::{image_to_map, map_to_image};
use compdeg_core::{Image, NetworkKind, NetworkWeights};
use serde::Serialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::args::ServeArgs;
use crate::commands::{estimated_map, restore_image, AttributeSource, EstimateSummary};
use crate::error::{CliError, CliResult};

pub const DEFAULT_MAX_DIM: usize = 2048;

pub struct Models {
    pub estimator: NetworkWeights,
    pub restorer: NetworkWeights,
    /// Largest accepted width or height.
    pub max_dim: usize,
}

type Shared = Arc<Models>;

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    TooLarge(String),
    Unprocessable(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, message) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::TooLarge(m) => (StatusCode::PAYLOAD_TOO_LARGE, m),
            ApiError::Unprocessable(m) => (StatusCode::UNPROCESSABLE_ENTITY, m),
            ApiError::Internal(detail) => {
                eprintln!("internal error: {detail}");
                (StatusCode::INTERNAL_SERVER_ERROR, "internal error".to_string())
            }
        };
        (status, Json(json!({ "error": message }))).into_response()
    }
}

pub fn router(models: Models, static_dir: Option<&Path>) -> Router {
    // Enough for an uncompressed PNG at the size cap plus multipart framing.
    let body_limit = (models.max_dim * models.max_dim * 3 * 2).max(1 << 20) + (1 << 16);
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/estimate", post(estimate))
        .route("/api/restore", post(restore))
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(Arc::new(models));
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Serialize)]
struct ModelInfo {
    architecture: NetworkKind,
    name: String,
    seed: u64,
    epochs: usize,
    parameters: usize,
}

impl ModelInfo {
    fn of(w: &NetworkWeights) -> Self {
        ModelInfo {
            architecture: w.kind(),
            name: w.metadata.name.clone(),
            seed: w.metadata.seed,
            epochs: w.metadata.epochs,
            parameters: w.param_count(),
        }
    }
}

async fn health(State(models): State<Shared>) -> impl IntoResponse {
    Json(json!({
        "status": "ok",
        "estimator": ModelInfo::of(&models.estimator),
        "restorer": ModelInfo::of(&models.restorer),
        "max_dim": models.max_dim,
    }))
}

#[derive(Default)]
struct Upload {
    image: Option<Bytes>,
    map: Option<Bytes>,
}

async fn read_upload(mut multipart: Multipart, allow_map: bool) -> Result<Upload, ApiError> {
    let mut upload = Upload::default();
    loop {
        let field = multipart.next_field().await.map_err(multipart_error)?;
        let Some(field) = field else { break };
        let name = field.name().unwrap_or_default().to_string();
        let slot = match name.as_str() {
            "image" => &mut upload.image,
            "map" if allow_map => &mut upload.map,
            other => return Err(ApiError::BadRequest(format!("unexpected field {other:?}"))),
        };
        if slot.is_some() {
            return Err(ApiError::BadRequest(format!("field {name:?} sent twice")));
        }
        *slot = Some(field.bytes().await.map_err(multipart_error)?);
    }
    if upload.image.is_none() {
        return Err(ApiError::BadRequest("missing multipart field \"image\"".into()));
    }
    Ok(upload)
}

fn multipart_error(err: axum::extract::multipart::MultipartError) -> ApiError {
    if err.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::TooLarge("upload exceeds the size limit".into())
    } else {
        ApiError::BadRequest(format!("malformed multipart body: {}", err.body_text()))
    }
}

fn decode_upload(bytes: &[u8], what: &str, max_dim: usize) -> Result<Image, ApiError> {
    let (w, h) = Image::probe_dimensions(bytes)
        .map_err(|_| ApiError::BadRequest(format!("{what} is not a readable image")))?;
    if w > max_dim || h > max_dim {
        return Err(ApiError::TooLarge(format!(
            "{what} is {w}x{h}; the limit is {max_dim}x{max_dim}"
        )));
    }
    if w == 0 || h == 0 {
        return Err(ApiError::BadRequest(format!("{what} is empty")));
    }
    Image::decode(bytes).map_err(|_| ApiError::BadRequest(format!("{what} is not a readable image")))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> compdeg_core::Result<T> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(|e| ApiError::Internal(e.to_string()))
}

#[derive(Serialize)]
struct EstimateResponse {
    width: usize,
    height: usize,
    #[serde(flatten)]
    summary: EstimateSummary,
    /// Base64 PNG; red = blur, green = noise, blue = JPEG.
    map_png: String,
}

async fn estimate(State(models): State<Shared>, multipart: Multipart) -> Result<Response, ApiError> {
    let upload = read_upload(multipart, false).await?;
    let img = decode_upload(&upload.image.unwrap_or_default(), "image", models.max_dim)?;
    let (width, height) = (img.width(), img.height());
    let (summary, png) = blocking(move || {
        let map = estimated_map(&models.estimator, &img)?;
        Ok((EstimateSummary::of(&map), map_to_image(&map).encode_png()?))
    })
    .await?;
    let body = EstimateResponse {
        width,
        height,
        summary,
        map_png: base64::engine::general_purpose::STANDARD.encode(png),
    };
    Ok(Json(body).into_response())
}

async fn restore(State(models): State<Shared>, multipart: Multipart) -> Result<Response, ApiError> {
    let upload = read_upload(multipart, true).await?;
    let img = decode_upload(&upload.image.unwrap_or_default(), "image", models.max_dim)?;
    let map = match upload.map {
        Some(bytes) => {
            let map = image_to_map(&decode_upload(&bytes, "map", models.max_dim)?);
            if !map.same_size(&img) {
                return Err(ApiError::Unprocessable(format!(
                    "map is {}x{} but image is {}x{}",
                    map.width(),
                    map.height(),
                    img.width(),
                    img.height()
                )));
            }
            Some(map)
        }
        None => None,
    };
    let png = blocking(move || {
        let source = match map {
            Some(m) => AttributeSource::Map(m),
            None => AttributeSource::Blind(&models.estimator),
        };
        restore_image(&models.restorer, &img, &source)?.encode_png()
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

pub fn load_models(args: &ServeArgs) -> CliResult<Models> {
    let load = |path: &Path, kind| {
        compdeg_core::network::load_weights_as(path, kind).map_err(|e| match e {
            compdeg_core::Error::Io(io) => CliError::io(path.display(), io),
            other => CliError::Validation(format!("{}: {other}", path.display())),
        })
    };
    if args.max_dim == 0 {
        return Err(CliError::Validation("--max-dim must be at least 1".into()));
    }
    Ok(Models {
        estimator: load(&args.est_weights, NetworkKind::Estimator)?,
        restorer: load(&args.res_weights, NetworkKind::Restorer)?,
        max_dim: args.max_dim,
    })
}

pub fn run(args: &ServeArgs) -> CliResult<()> {
    let models = load_models(args)?;
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| CliError::Usage(format!("bad --host/--port: {e}")))?;
    let app = router(models, args.static_dir.as_deref());
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::io("tokio runtime", e))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::io(addr, e))?;
        println!("listening on http://{addr}");
        axum::serve(listener, app).await.map_err(|e| CliError::io("server", e))
    })
}
