import { GatewayClient } from "./client.js";
import { ConsoleSession } from "./console.js";
import { render } from "./render.js";

const params = new URLSearchParams(window.location.search);
const endpoint = params.get("api") ?? "http://127.0.0.1:8787";
const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");

const client = new GatewayClient(endpoint);
const session = new ConsoleSession(client, (vm) => render(root, vm, session));
session.connect();
