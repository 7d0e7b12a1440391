//! TCP listener for out-of-process xApps speaking the framed E2 protocol.
//!
//! A connection may send `subscription` and `control` frames. A subscription
//! is echoed back with its assigned `sub_id`, after which matching
//! `indication` frames arrive on the same connection. Closing the connection
//! removes its subscriptions.

use std::io;
use std::sync::Arc;

use edgeai_core::ric::wire::{encode, E2Message, MAX_FRAME_BYTES};
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;

use crate::Gateway;

pub async fn read_frame<R: AsyncRead + Unpin>(r: &mut R) -> io::Result<Option<E2Message>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len).await {
        Ok(_) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME_BYTES {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {n} bytes")));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body).await?;
    serde_json::from_slice(&body)
        .map(Some)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

pub async fn serve(listener: TcpListener, gw: Arc<Gateway>) -> io::Result<()> {
    loop {
        let (sock, _) = listener.accept().await?;
        tokio::spawn(connection(sock, gw.clone()));
    }
}

fn handle(gw: &Gateway, msg: E2Message, tx: &mpsc::UnboundedSender<E2Message>, owned: &mut Vec<String>) -> E2Message {
    match msg {
        E2Message::Subscription(mut s) => match gw.with(|o| o.world_mut().subscribe(s.clone())) {
            Ok(id) => {
                gw.route(id.clone(), tx.clone());
                owned.push(id.clone());
                s.sub_id = id;
                E2Message::Subscription(s)
            }
            Err(e) => E2Message::Error { message: e.to_string() },
        },
        E2Message::Control(c) => match gw.with(|o| o.world_mut().send_control(c)) {
            Ok(ack) => E2Message::Ack(ack),
            Err(e) => E2Message::Error { message: e.to_string() },
        },
        other => E2Message::Error {
            message: format!("unexpected {} frame from an xApp", frame_type(&other)),
        },
    }
}

fn frame_type(m: &E2Message) -> &'static str {
    match m {
        E2Message::Subscription(_) => "subscription",
        E2Message::Indication(_) => "indication",
        E2Message::Control(_) => "control",
        E2Message::Ack(_) => "ack",
        E2Message::Error { .. } => "error",
    }
}

async fn connection(sock: TcpStream, gw: Arc<Gateway>) {
    let (mut rd, mut wr) = sock.into_split();
    let (tx, mut rx) = mpsc::unbounded_channel::<E2Message>();
    let writer = tokio::spawn(async move {
        while let Some(m) = rx.recv().await {
            if wr.write_all(&encode(&m)).await.is_err() {
                break;
            }
        }
    });
    let mut owned = Vec::new();
    loop {
        match read_frame(&mut rd).await {
            Ok(Some(msg)) => {
                let reply = handle(&gw, msg, &tx, &mut owned);
                if tx.send(reply).is_err() {
                    break;
                }
            }
            Ok(None) => break,
            Err(e) => {
                let _ = tx.send(E2Message::Error { message: e.to_string() });
                break;
            }
        }
    }
    gw.drop_routes(&owned);
    gw.with(|o| {
        for id in &owned {
            let _ = o.world_mut().unsubscribe(id);
        }
    });
    drop(tx);
    let _ = writer.await;
}
