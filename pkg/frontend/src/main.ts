import { makeApi } from "./api.js";
import { render } from "./dom.js";
import { createStore } from "./store.js";
import { renderTreeView } from "./view.js";

const container = document.getElementById("root");
if (!container) throw new Error("missing #root element");

const api = makeApi((input, init) => fetch(input, init));
const store = createStore(api, (state) => {
  render(renderTreeView(state), container, (action) => void store.dispatch(action));
});

render(renderTreeView(store.get()), container, (action) => void store.dispatch(action));
void store.init();
