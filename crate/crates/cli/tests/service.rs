//! HTTP API driven in-process through the router.

mod common;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use base64::Engine as _;
use common::*;
use compdeg_cli::service::{router, Models, DEFAULT_MAX_DIM};
use compdeg_core::{ArchitectureSpec, Image};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

fn zero_models(max_dim: usize) -> Models {
    Models {
        estimator: zero_weights(ArchitectureSpec::estimator()),
        restorer: zero_weights(ArchitectureSpec::restorer()),
        max_dim,
    }
}

async fn send(app: Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

fn post(uri: &str, parts: &[(&str, &[u8])]) -> Request<Body> {
    Request::post(uri)
        .header("content-type", multipart_content_type())
        .body(Body::from(multipart_body(parts)))
        .unwrap()
}

fn png(img: &Image) -> Vec<u8> {
    img.encode_png().unwrap()
}

#[tokio::test]
async fn health_names_both_architectures() {
    let (status, body) = send(router(zero_models(DEFAULT_MAX_DIM), None), Request::get("/api/health").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["estimator"]["architecture"], "estimator");
    assert_eq!(v["restorer"]["architecture"], "restorer");
    assert_eq!(v["max_dim"], 2048);
}

#[tokio::test]
async fn zero_map_and_zero_restorer_echo_the_image() {
    let img = lattice_image(1, 15, 11);
    let bytes = png(&img);
    let map = png(&Image::filled(15, 11, 0.0).unwrap());
    let (status, body) = send(router(zero_models(64), None), post("/api/restore", &[("image", &bytes), ("map", &map)])).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, bytes);
    // blind with the zero estimator as well
    let (status, body) = send(router(zero_models(64), None), post("/api/restore", &[("image", &bytes)])).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, bytes);
}

#[tokio::test]
async fn estimate_returns_map_and_means() {
    let models = Models {
        estimator: random_weights(ArchitectureSpec::estimator(), 4),
        ..zero_models(64)
    };
    let img = lattice_image(2, 10, 13);
    let (status, body) = send(router(models, None), post("/api/estimate", &[("image", &png(&img))])).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!((v["width"].as_u64(), v["height"].as_u64()), (Some(13), Some(10)));
    let map_png = base64::engine::general_purpose::STANDARD.decode(v["map_png"].as_str().unwrap()).unwrap();
    let map = Image::decode(&map_png).unwrap();
    assert_eq!((map.height(), map.width()), (10, 13));
    let blur_mean = map.plane(0).iter().map(|&x| f64::from(x)).sum::<f64>() / 130.0;
    assert!((v["means"]["blur"].as_f64().unwrap() - blur_mean).abs() < 1e-6);
    assert!(v["spec"]["sigma"].is_number());
}

#[tokio::test]
async fn malformed_uploads_are_400() {
    let app = || router(zero_models(64), None);
    let (status, body) = send(app(), post("/api/restore", &[("map", &png(&Image::filled(4, 4, 0.0).unwrap()))])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(String::from_utf8_lossy(&body).contains("image"));
    let (status, _) = send(app(), post("/api/restore", &[("image", b"definitely not a png")])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = send(app(), post("/api/estimate", &[("image", &png(&lattice_image(3, 4, 4))), ("map", b"x")])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let req = Request::post("/api/restore").header("content-type", "application/json").body(Body::from("{}")).unwrap();
    let (status, _) = send(app(), req).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn oversized_images_are_413() {
    let app = router(zero_models(8), None);
    let (status, body) = send(app, post("/api/restore", &[("image", &png(&lattice_image(4, 8, 9)))])).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert!(String::from_utf8_lossy(&body).contains("8x8"));
    let (status, _) = send(router(zero_models(8), None), post("/api/estimate", &[("image", &png(&lattice_image(4, 8, 8)))])).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn mismatched_map_is_422() {
    let app = router(zero_models(64), None);
    let (status, body) = send(app, post("/api/restore", &[("image", &png(&lattice_image(5, 6, 6))), ("map", &png(&Image::filled(6, 5, 0.0).unwrap()))])).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(String::from_utf8_lossy(&body).contains("map is 5x6 but image is 6x6"));
}

#[tokio::test]
async fn static_files_are_served_under_root() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>studio</h1>").unwrap();
    let (status, body) = send(router(zero_models(64), Some(dir.path())), Request::get("/index.html").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"<h1>studio</h1>");
    let (status, _) = send(router(zero_models(64), Some(dir.path())), Request::get("/api/health").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
}
