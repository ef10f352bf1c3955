//! Point-to-point reliable FIFO transports carrying wire frames. The
//! default is an in-process channel pair; a TCP variant sends the same
//! frames over a socket.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{channel, Receiver, Sender};

use crate::error::{FedError, Result};
use crate::msg::PartyMessage;

pub trait Transport: Send {
    fn send(&mut self, msg: &PartyMessage) -> Result<usize>;
    fn recv(&mut self) -> Result<(PartyMessage, usize)>;
}

/// In-process transport: frames traverse a channel as encoded bytes so
/// byte accounting matches any real wire exactly.
pub struct ChannelTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

impl ChannelTransport {
    /// Two connected endpoints.
    pub fn pair() -> (ChannelTransport, ChannelTransport) {
        let (tx_a, rx_b) = channel();
        let (tx_b, rx_a) = channel();
        (
            ChannelTransport { tx: tx_a, rx: rx_a },
            ChannelTransport { tx: tx_b, rx: rx_b },
        )
    }
}

impl Transport for ChannelTransport {
    fn send(&mut self, msg: &PartyMessage) -> Result<usize> {
        let frame = msg.encode();
        let n = frame.len();
        self.tx
            .send(frame)
            .map_err(|_| FedError::Transport("peer hung up".into()))?;
        Ok(n)
    }

    fn recv(&mut self) -> Result<(PartyMessage, usize)> {
        let frame = self
            .rx
            .recv()
            .map_err(|_| FedError::Transport("peer hung up".into()))?;
        let n = frame.len();
        Ok((PartyMessage::decode(&frame)?, n))
    }
}

/// Frames over a TCP stream, identical bytes to the channel transport.
pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> Self {
        TcpTransport { stream }
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, msg: &PartyMessage) -> Result<usize> {
        let frame = msg.encode();
        self.stream.write_all(&frame)?;
        Ok(frame.len())
    }

    fn recv(&mut self) -> Result<(PartyMessage, usize)> {
        let mut header = [0u8; 4];
        self.stream.read_exact(&mut header)?;
        let len = u32::from_be_bytes(header) as usize;
        let mut frame = vec![0u8; 4 + len];
        frame[0..4].copy_from_slice(&header);
        self.stream.read_exact(&mut frame[4..])?;
        let n = frame.len();
        Ok((PartyMessage::decode(&frame)?, n))
    }
}
